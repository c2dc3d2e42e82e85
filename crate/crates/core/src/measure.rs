//! Finite weight spaces and finite (sub)probability measures on them.
//!
//! A [`WeightSpace`] is the alphabet of edge weights: a finite metric space
//! with a distinguished point `0` (the weight of a missing edge). Measures
//! are plain weight vectors indexed like the space's points.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LpIndex;
use crate::scalar::{log_sum_exp, Scalar};

/// A point of the weight alphabet: either a real value or an opaque label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Real(f64),
    Label(String),
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Real(x) => write!(f, "{x}"),
            Point::Label(s) => f.write_str(s),
        }
    }
}

/// How distances between points are obtained. Reported alongside any result
/// that depends on the metric.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric<T> {
    /// `d(x, y) = 1` for `x != y`.
    Discrete,
    /// `d(x, y) = |x - y|` on real-valued points.
    AbsoluteDifference,
    /// Explicit row-major `k × k` matrix.
    Matrix(Vec<T>),
}

impl<T> Metric<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Discrete => "discrete",
            Metric::AbsoluteDifference => "absolute-difference",
            Metric::Matrix(_) => "matrix",
        }
    }
}

pub struct WeightSpace<T: Scalar> {
    points: Vec<Point>,
    metric: Metric<T>,
    zero_index: usize,
    lp_index: OnceLock<LpIndex<T>>,
}

impl<T: Scalar> fmt::Debug for WeightSpace<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSpace")
            .field("points", &self.points)
            .field("metric", &self.metric.name())
            .field("zero_index", &self.zero_index)
            .finish()
    }
}

impl<T: Scalar> Clone for WeightSpace<T> {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            metric: self.metric.clone(),
            zero_index: self.zero_index,
            lp_index: OnceLock::new(),
        }
    }
}

impl<T: Scalar> PartialEq for WeightSpace<T> {
    fn eq(&self, other: &Self) -> bool {
        self.zero_index == other.zero_index
            && self.points == other.points
            && self.metric == other.metric
    }
}

impl<T: Scalar> WeightSpace<T> {
    fn build(points: Vec<Point>, metric: Metric<T>, zero_index: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpace("no points".into()));
        }
        if zero_index >= points.len() {
            return Err(Error::InvalidSpace(format!(
                "zero_index {zero_index} out of range for {} points",
                points.len()
            )));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::InvalidSpace(format!("duplicate point {}", points[i])));
                }
            }
        }
        if matches!(metric, Metric::AbsoluteDifference) {
            for p in &points {
                match p {
                    Point::Real(x) if x.is_finite() => {}
                    _ => {
                        return Err(Error::InvalidSpace(
                            "absolute-difference metric needs finite real points".into(),
                        ))
                    }
                }
            }
        }
        let space = Self { points, metric, zero_index, lp_index: OnceLock::new() };
        if let Metric::Matrix(ref m) = space.metric {
            space.validate_matrix(m)?;
        }
        Ok(space)
    }

    fn validate_matrix(&self, m: &[T]) -> Result<()> {
        let k = self.points.len();
        if m.len() != k * k {
            return Err(Error::Dimension { expected: k * k, got: m.len() });
        }
        let tol = T::lit(1e-12);
        for i in 0..k {
            if m[i * k + i] != T::zero() {
                return Err(Error::InvalidSpace(format!("dist[{i}][{i}] is not zero")));
            }
            for j in 0..k {
                let d = m[i * k + j];
                if !d.is_finite() || d < T::zero() {
                    return Err(Error::InvalidSpace(format!("dist[{i}][{j}] is not a nonnegative real")));
                }
                if i != j && d == T::zero() {
                    return Err(Error::InvalidSpace(format!("distinct points {i}, {j} at distance 0")));
                }
                if d != m[j * k + i] {
                    return Err(Error::InvalidSpace(format!("dist is not symmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    if m[i * k + l] > m[i * k + j] + m[j * k + l] + tol {
                        return Err(Error::InvalidSpace(format!(
                            "triangle inequality fails for ({i}, {j}, {l})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Space with an explicit distance matrix (rows of equal length).
    pub fn with_matrix(points: Vec<Point>, dist: Vec<Vec<T>>, zero_index: usize) -> Result<Self> {
        let k = points.len();
        if dist.len() != k {
            return Err(Error::Dimension { expected: k, got: dist.len() });
        }
        let mut flat = Vec::with_capacity(k * k);
        for row in dist {
            if row.len() != k {
                return Err(Error::Dimension { expected: k, got: row.len() });
            }
            flat.extend(row);
        }
        Self::build(points, Metric::Matrix(flat), zero_index)
    }

    /// Space carrying the discrete metric.
    pub fn discrete(points: Vec<Point>, zero_index: usize) -> Result<Self> {
        Self::build(points, Metric::Discrete, zero_index)
    }

    /// Real-valued points with `|x - y|`; the distinguished point is the
    /// (required) value `0.0`.
    pub fn real_line(values: &[f64]) -> Result<Self> {
        let zero_index = values
            .iter()
            .position(|&x| x == 0.0)
            .ok_or_else(|| Error::InvalidSpace("real-line space must contain 0".into()))?;
        Self::build(values.iter().map(|&x| Point::Real(x)).collect(), Metric::AbsoluteDifference, zero_index)
    }

    /// Real-valued points with `|x - y|` and an explicitly chosen
    /// distinguished index (used for discretization levels whose
    /// representatives need not include `0`).
    pub fn real_points(values: &[f64], zero_index: usize) -> Result<Self> {
        Self::build(values.iter().map(|&x| Point::Real(x)).collect(), Metric::AbsoluteDifference, zero_index)
    }

    /// `{0, 1}` with the discrete metric.
    pub fn binary() -> Self {
        Self::build(vec![Point::Real(0.0), Point::Real(1.0)], Metric::Discrete, 0).expect("binary space")
    }

    /// `{0, 1, ..., k-1}` with the discrete metric.
    pub fn discrete_range(k: usize) -> Result<Self> {
        Self::build((0..k).map(|i| Point::Real(i as f64)).collect(), Metric::Discrete, 0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn metric(&self) -> &Metric<T> {
        &self.metric
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    /// Real value of point `i`, if it has one.
    pub fn value(&self, i: usize) -> Option<f64> {
        match self.points[i] {
            Point::Real(x) => Some(x),
            Point::Label(_) => None,
        }
    }

    /// Real values of all points, when every point is real.
    pub fn values(&self) -> Option<Vec<f64>> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> T {
        match &self.metric {
            Metric::Discrete => {
                if i == j {
                    T::zero()
                } else {
                    T::one()
                }
            }
            Metric::AbsoluteDifference => {
                let (Some(x), Some(y)) = (self.value(i), self.value(j)) else {
                    unreachable!("validated at construction")
                };
                T::lit((x - y).abs())
            }
            Metric::Matrix(m) => m[i * self.len() + j],
        }
    }

    pub fn dist_matrix(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.dist(i, j)).collect()).collect()
    }

    pub(crate) fn lp_index(&self) -> &LpIndex<T> {
        self.lp_index.get_or_init(|| LpIndex::new(self))
    }
}

/// Whether two space handles denote the same space.
pub fn same_space<T: Scalar>(a: &Arc<WeightSpace<T>>, b: &Arc<WeightSpace<T>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Probability,
    Subprobability,
    /// Present only so that signed inputs can be named and rejected.
    SignedForbidden,
}

/// Nonnegative weights over a [`WeightSpace`].
#[derive(Debug, Clone)]
pub struct FiniteMeasure<T: Scalar> {
    space: Arc<WeightSpace<T>>,
    weights: Vec<T>,
    kind: MeasureKind,
}

impl<T: Scalar> PartialEq for FiniteMeasure<T> {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.weights == other.weights && same_space(&self.space, &other.space)
    }
}

impl<T: Scalar> FiniteMeasure<T> {
    pub fn new(space: Arc<WeightSpace<T>>, weights: Vec<T>, kind: MeasureKind) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::Dimension { expected: space.len(), got: weights.len() });
        }
        if kind == MeasureKind::SignedForbidden {
            return Err(Error::InvalidMeasure("signed measures are not supported".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if w.is_nan() || w < T::zero() || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("weight {i} = {w} is not a nonnegative real")));
            }
        }
        let mass: T = weights.iter().copied().sum();
        let tol = T::mass_tol();
        match kind {
            MeasureKind::Probability if (mass - T::one()).abs() > tol => {
                return Err(Error::InvalidMeasure(format!("probability measure has mass {mass}")));
            }
            MeasureKind::Subprobability if mass > T::one() + tol => {
                return Err(Error::InvalidMeasure(format!("subprobability measure has mass {mass}")));
            }
            _ => {}
        }
        Ok(Self { space, weights, kind })
    }

    pub fn probability(space: Arc<WeightSpace<T>>, weights: Vec<T>) -> Result<Self> {
        Self::new(space, weights, MeasureKind::Probability)
    }

    pub fn subprobability(space: Arc<WeightSpace<T>>, weights: Vec<T>) -> Result<Self> {
        Self::new(space, weights, MeasureKind::Subprobability)
    }

    /// Normalizes arbitrary nonnegative weights into a probability measure.
    pub fn normalized(space: Arc<WeightSpace<T>>, weights: Vec<T>) -> Result<Self> {
        let mass: T = weights.iter().copied().sum();
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::InvalidMeasure(format!("cannot normalize weights of mass {mass}")));
        }
        Self::probability(space, weights.into_iter().map(|w| w / mass).collect())
    }

    pub fn dirac(space: Arc<WeightSpace<T>>, index: usize) -> Result<Self> {
        if index >= space.len() {
            return Err(Error::InvalidArgument(format!("point index {index} out of range")));
        }
        let mut weights = vec![T::zero(); space.len()];
        weights[index] = T::one();
        Ok(Self { space, weights, kind: MeasureKind::Probability })
    }

    pub fn uniform(space: Arc<WeightSpace<T>>) -> Self {
        let k = space.len();
        let w = T::one() / T::lit(k as f64);
        Self { space, weights: vec![w; k], kind: MeasureKind::Probability }
    }

    /// `Bernoulli(p)` on a two-point space: mass `p` on the non-zero point.
    pub fn bernoulli(space: Arc<WeightSpace<T>>, p: T) -> Result<Self> {
        if space.len() != 2 {
            return Err(Error::InvalidArgument("Bernoulli needs a two-point space".into()));
        }
        let mut weights = vec![p; 2];
        weights[space.zero_index()] = T::one() - p;
        Self::probability(space, weights)
    }

    pub(crate) fn from_parts_unchecked(space: Arc<WeightSpace<T>>, weights: Vec<T>, kind: MeasureKind) -> Self {
        debug_assert_eq!(space.len(), weights.len());
        Self { space, weights, kind }
    }

    pub fn space(&self) -> &Arc<WeightSpace<T>> {
        &self.space
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn total_mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - T::one()).abs() <= T::mass_tol()
    }

    /// `⟨self, f⟩`.
    pub fn integrate(&self, f: &[T]) -> Result<T> {
        check_len(f, self.space.len())?;
        Ok(self.weights.iter().zip(f).map(|(&w, &x)| w * x).sum())
    }

    /// Whether every point carries positive mass.
    pub fn has_full_support(&self) -> bool {
        self.weights.iter().all(|&w| w > T::zero())
    }

    pub fn same_space_as(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space)
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.same_space_as(other) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }
}

pub(crate) fn check_len<T>(f: &[T], k: usize) -> Result<()> {
    if f.len() == k {
        Ok(())
    } else {
        Err(Error::Dimension { expected: k, got: f.len() })
    }
}

fn require_probability<T: Scalar>(nu: &FiniteMeasure<T>) -> Result<()> {
    if nu.kind == MeasureKind::Probability {
        Ok(())
    } else {
        Err(Error::InvalidMeasure("reference measure must be a probability measure".into()))
    }
}

/// `Σ ω_i log(ω_i / ν_i)` on raw weights, `+∞` on absolute-continuity
/// failure. Assumes `omega` is a probability vector.
pub(crate) fn kl_weights<T: Scalar>(omega: &[T], nu: &[T]) -> T {
    let mut acc = T::zero();
    for (&w, &v) in omega.iter().zip(nu) {
        if w > T::zero() {
            if v <= T::zero() {
                return T::infinity();
            }
            acc = acc + w * (w / v).ln();
        }
    }
    // Rounding can push a vanishing divergence slightly negative.
    acc.max(T::zero())
}

/// Relative entropy `H(ω | ν)`. Returns `+∞` when `ω` is not a probability
/// measure or is not absolutely continuous with respect to `ν`.
pub fn kl_divergence<T: Scalar>(omega: &FiniteMeasure<T>, nu: &FiniteMeasure<T>) -> Result<T> {
    omega.check_same_space(nu)?;
    require_probability(nu)?;
    if !omega.is_probability() {
        return Ok(T::infinity());
    }
    Ok(kl_weights(&omega.weights, &nu.weights))
}

pub(crate) fn log_mgf_weights<T: Scalar>(f: &[T], nu: &[T]) -> T {
    let support = || f.iter().zip(nu).filter(|(_, &v)| v > T::zero());
    let m = support().map(|(&x, _)| x).fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    // Dividing by the total mass (one up to rounding) keeps constants exact.
    let shifted: T = support().map(|(&x, &v)| v * (x - m).exp()).sum();
    let mass: T = support().map(|(_, &v)| v).sum();
    m + (shifted / mass).ln()
}

/// `log Σ_i e^{f_i} ν_i`, max-shift stabilized.
pub fn log_mgf<T: Scalar>(f: &[T], nu: &FiniteMeasure<T>) -> Result<T> {
    require_probability(nu)?;
    check_len(f, nu.space.len())?;
    Ok(log_mgf_weights(f, &nu.weights))
}

pub(crate) fn tilt_weights<T: Scalar>(nu: &[T], f: &[T], theta: T) -> Vec<T> {
    if theta.is_infinite() {
        // All mass on the argmax (θ = +∞) or argmin (θ = -∞) of f over the support.
        let sign = theta.signum();
        let best = nu
            .iter()
            .zip(f)
            .filter(|(&v, _)| v > T::zero())
            .map(|(_, &x)| sign * x)
            .fold(T::neg_infinity(), T::max);
        let mass: T = nu
            .iter()
            .zip(f)
            .filter(|(&v, &x)| v > T::zero() && sign * x == best)
            .map(|(&v, _)| v)
            .sum();
        return nu
            .iter()
            .zip(f)
            .map(|(&v, &x)| if v > T::zero() && sign * x == best { v / mass } else { T::zero() })
            .collect();
    }
    let logs: Vec<T> = nu
        .iter()
        .zip(f)
        .map(|(&v, &x)| if v > T::zero() { v.ln() + theta * x } else { T::neg_infinity() })
        .collect();
    let lz = log_sum_exp(logs.iter().copied());
    logs.into_iter().map(|l| (l - lz).exp()).collect()
}

/// Exponential tilt: the probability measure with weights `∝ ν_i e^{θ f_i}`.
/// Infinite `θ` concentrates `ν` on the argmax (or argmin) of `f`.
pub fn tilt<T: Scalar>(nu: &FiniteMeasure<T>, f: &[T], theta: T) -> Result<FiniteMeasure<T>> {
    require_probability(nu)?;
    check_len(f, nu.space.len())?;
    if theta.is_nan() {
        return Err(Error::InvalidArgument("tilt parameter is NaN".into()));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("tilt function must be finite".into()));
    }
    Ok(FiniteMeasure::from_parts_unchecked(
        nu.space.clone(),
        tilt_weights(&nu.weights, f, theta),
        MeasureKind::Probability,
    ))
}

fn tilted_mean<T: Scalar>(nu: &[T], f: &[T], theta: T) -> T {
    tilt_weights(nu, f, theta).iter().zip(f).map(|(&w, &x)| w * x).sum()
}

/// Finds `θ` such that the `θ`-tilt of `ν` has `f`-mean equal to `target`,
/// by bracket expansion and bisection (at most 200 halvings, stopping once
/// `|mean − target| ≤ 1e-12`). Targets at the edge of the support range
/// return `θ = ±∞`.
pub fn tilt_to_mean<T: Scalar>(nu: &FiniteMeasure<T>, f: &[T], target: T) -> Result<(T, FiniteMeasure<T>)> {
    require_probability(nu)?;
    check_len(f, nu.space.len())?;
    let w = &nu.weights;
    let support = || w.iter().zip(f).filter(|(&v, _)| v > T::zero()).map(|(_, &x)| x);
    let lo_f = support().fold(T::infinity(), T::min);
    let hi_f = support().fold(T::neg_infinity(), T::max);
    let tol = T::lit(1e-12);
    if target > hi_f + tol || target < lo_f - tol {
        return Err(Error::Infeasible(format!(
            "mean {target} outside the attainable range [{lo_f}, {hi_f}]"
        )));
    }
    if hi_f - lo_f <= T::zero() {
        return Ok((T::zero(), nu.clone()));
    }
    let boundary = |theta: T| Ok((theta, tilt(nu, f, theta)?));
    if (target - hi_f).abs() <= tol {
        return boundary(T::infinity());
    }
    if (target - lo_f).abs() <= tol {
        return boundary(T::neg_infinity());
    }
    let base = tilted_mean(w, f, T::zero());
    if (base - target).abs() <= tol {
        return Ok((T::zero(), nu.clone()));
    }
    let dir = if target > base { T::one() } else { -T::one() };
    let (mut lo, mut hi) = (T::zero(), dir);
    let mut expansions = 0;
    while dir * (tilted_mean(w, f, hi) - target) < T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
        expansions += 1;
        if expansions > 1100 || !hi.is_finite() {
            return Err(Error::Numerical("tilt bracket expansion overflowed".into()));
        }
    }
    let mut theta = hi;
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid == lo || mid == hi {
            break;
        }
        theta = mid;
        let m = tilted_mean(w, f, mid);
        if (m - target).abs() <= tol {
            break;
        }
        if dir * (m - target) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((theta, tilt(nu, f, theta)?))
}
