//! Dyadic discretization of a compact weight interval `[a, b]`.
//!
//! Level `m` splits `[a, b]` into `2^m` equal cells (half-open, the last one
//! closed) with midpoint representatives. Measures with piecewise-polynomial
//! densities are pushed forward onto the representatives; the entropy of the
//! pushed-forward graphon is nondecreasing in the level.
//!
//! All projections are computed at the finest level and then merged pairwise
//! level by level, so `π_m = π_{m,n} ∘ π_n` holds bit-for-bit.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::entropy::graphon_entropy;
use crate::error::{Error, Result};
use crate::graphon::StepGraphon;
use crate::measure::{same_space, FiniteMeasure, MeasureKind, WeightSpace};
use crate::scalar::Scalar;

/// Deepest level a scheme may be built with.
pub const MAX_DEPTH: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub interval: [f64; 2],
    pub depth_max: usize,
}

#[derive(Debug, Clone)]
pub struct NestedPartitionScheme<T: Scalar> {
    a: f64,
    b: f64,
    depth_max: usize,
    levels: Vec<Arc<WeightSpace<T>>>,
}

impl<T: Scalar> NestedPartitionScheme<T> {
    pub fn new(a: f64, b: f64, depth_max: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!("interval [{a}, {b}] is not a proper finite interval")));
        }
        if depth_max > MAX_DEPTH {
            return Err(Error::InvalidArgument(format!("depth {depth_max} exceeds the maximum {MAX_DEPTH}")));
        }
        let mut levels = Vec::with_capacity(depth_max + 1);
        for m in 0..=depth_max {
            let reps = representatives(a, b, m);
            let zero = zero_cell(a, b, m);
            levels.push(Arc::new(WeightSpace::real_points(&reps, zero)?));
        }
        let scheme = Self { a, b, depth_max, levels };
        scheme.check_structure()?;
        Ok(scheme)
    }

    pub fn from_config(config: &SchemeConfig) -> Result<Self> {
        Self::new(config.interval[0], config.interval[1], config.depth_max)
    }

    fn check_structure(&self) -> Result<()> {
        for m in 0..=self.depth_max {
            let bounds = self.boundaries(m);
            let reps = self.representatives(m);
            let expected = (self.b - self.a) / (1u64 << m) as f64;
            for i in 0..reps.len() {
                let (l, r) = (bounds[i], bounds[i + 1]);
                if ((r - l) - expected).abs() > 1e-12 * (self.b - self.a) {
                    return Err(Error::Numerical(format!("level {m} cell {i} has the wrong diameter")));
                }
                if !(l <= reps[i] && reps[i] <= r) {
                    return Err(Error::Numerical(format!("level {m} representative {i} escapes its cell")));
                }
                if m > 0 {
                    let parent = &self.boundaries(m - 1);
                    if !(parent[i / 2] <= l && r <= parent[i / 2 + 1]) {
                        return Err(Error::Numerical(format!("level {m} is not nested in level {}", m - 1)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn depth_max(&self) -> usize {
        self.depth_max
    }

    /// `2^m + 1` cut points of level `m`.
    pub fn boundaries(&self, m: usize) -> Vec<f64> {
        let cells = 1usize << m;
        let h = (self.b - self.a) / cells as f64;
        (0..=cells).map(|i| if i == cells { self.b } else { self.a + i as f64 * h }).collect()
    }

    pub fn representatives(&self, m: usize) -> Vec<f64> {
        representatives(self.a, self.b, m)
    }

    /// Largest cell diameter at level `m`.
    pub fn diameter(&self, m: usize) -> f64 {
        (self.b - self.a) / (1u64 << m) as f64
    }

    /// Weight space of level `m`: midpoints with `|x − y|`.
    pub fn level_space(&self, m: usize) -> Result<&Arc<WeightSpace<T>>> {
        self.levels
            .get(m)
            .ok_or_else(|| Error::InvalidArgument(format!("level {m} exceeds depth {}", self.depth_max)))
    }

    /// Index of the level-`m` cell containing `x`.
    pub fn cell_of(&self, x: f64, m: usize) -> Option<usize> {
        if x < self.a || x > self.b {
            return None;
        }
        let cells = 1usize << m;
        let i = ((x - self.a) / (self.b - self.a) * cells as f64).floor() as usize;
        Some(i.min(cells - 1))
    }

    fn finest_masses(&self, mu: &DensityMeasure) -> Result<Vec<T>> {
        let (lo, hi) = mu.support();
        if lo < self.a - 1e-12 || hi > self.b + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "density support [{lo}, {hi}] leaves the interval [{}, {}]",
                self.a, self.b
            )));
        }
        let bounds = self.boundaries(self.depth_max);
        Ok(mu.cell_masses(&bounds).into_iter().map(T::lit).collect())
    }

    fn build_measure(&self, m: usize, weights: Vec<T>) -> Result<FiniteMeasure<T>> {
        let space = self.level_space(m)?.clone();
        let mass: T = weights.iter().copied().sum();
        let kind = if (mass - T::one()).abs() <= T::mass_tol() {
            MeasureKind::Probability
        } else {
            MeasureKind::Subprobability
        };
        FiniteMeasure::new(space, weights, kind)
    }

    /// `π_m(μ)`: the mass of every level-`m` cell placed on its representative.
    pub fn project_measure(&self, mu: &DensityMeasure, m: usize) -> Result<FiniteMeasure<T>> {
        if m > self.depth_max {
            return Err(Error::InvalidArgument(format!("level {m} exceeds depth {}", self.depth_max)));
        }
        let weights = halve_to(self.finest_masses(mu)?, self.depth_max, m);
        self.build_measure(m, weights)
    }

    /// The level of the scheme whose space `mu` lives on.
    pub fn level_of(&self, mu: &FiniteMeasure<T>) -> Result<usize> {
        let m = mu.space().len().trailing_zeros() as usize;
        match self.levels.get(m) {
            Some(space) if mu.space().len().is_power_of_two() && same_space(space, mu.space()) => Ok(m),
            _ => Err(Error::InvalidArgument("measure does not live on a level of this scheme".into())),
        }
    }

    /// `π_{m,n}`: merges a level-`n` measure down to level `m ≤ n`.
    pub fn project_between(&self, mu: &FiniteMeasure<T>, m: usize) -> Result<FiniteMeasure<T>> {
        let n = self.level_of(mu)?;
        if m > n {
            return Err(Error::InvalidArgument(format!("cannot project level {n} up to level {m}")));
        }
        self.build_measure(m, halve_to(mu.weights().to_vec(), n, m))
    }

    /// Cell-wise projection of a density graphon.
    pub fn project_graphon(&self, w: &DensityGraphon, m: usize) -> Result<StepGraphon<T>> {
        if m > self.depth_max {
            return Err(Error::InvalidArgument(format!("level {m} exceeds depth {}", self.depth_max)));
        }
        let mut weights = Vec::with_capacity(w.n * w.n * (1 << m));
        for cell in &w.cells {
            if !cell.is_probability() {
                return Err(Error::InvalidMeasure("graphon cell density does not integrate to 1".into()));
            }
            weights.extend(halve_to(self.finest_masses(cell)?, self.depth_max, m));
        }
        StepGraphon::from_weights(self.level_space(m)?.clone(), w.n, weights, w.symmetric)
    }

    /// `H̃(π_m(W) | π_m(ν))` for `m = 1, …, m_max`.
    pub fn rate_by_projections(&self, w: &DensityGraphon, nu: &DensityMeasure, m_max: usize) -> Result<Vec<T>> {
        if m_max > self.depth_max {
            return Err(Error::InvalidArgument(format!("m_max {m_max} exceeds depth {}", self.depth_max)));
        }
        if !nu.is_probability() {
            return Err(Error::InvalidMeasure("reference density does not integrate to 1".into()));
        }
        let nu_fine = self.finest_masses(nu)?;
        let cells_fine = w
            .cells
            .iter()
            .map(|c| {
                if c.is_probability() {
                    self.finest_masses(c)
                } else {
                    Err(Error::InvalidMeasure("graphon cell density does not integrate to 1".into()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(m_max);
        let mut nu_level = nu_fine;
        let mut cells_level = cells_fine;
        let mut level = self.depth_max;
        let mut by_level = vec![None; m_max + 1];
        while level >= 1 {
            if level <= m_max {
                let nu_m = self.build_measure(level, nu_level.clone())?;
                let g = StepGraphon::from_weights(
                    self.level_space(level)?.clone(),
                    w.n,
                    cells_level.concat(),
                    w.symmetric,
                )?;
                by_level[level] = Some(graphon_entropy(&g, &nu_m)?);
            }
            nu_level = halve_once(&nu_level);
            cells_level = cells_level.iter().map(|c| halve_once(c)).collect();
            level -= 1;
        }
        for v in by_level.into_iter().skip(1) {
            out.push(v.expect("every level visited"));
        }
        Ok(out)
    }
}

fn representatives(a: f64, b: f64, m: usize) -> Vec<f64> {
    let cells = 1usize << m;
    let h = (b - a) / cells as f64;
    (0..cells).map(|i| a + (i as f64 + 0.5) * h).collect()
}

/// Cell holding `0`, or the nearest end cell when `0 ∉ [a, b]`.
fn zero_cell(a: f64, b: f64, m: usize) -> usize {
    let cells = 1usize << m;
    if b <= 0.0 {
        cells - 1
    } else if a >= 0.0 {
        0
    } else {
        (((0.0 - a) / (b - a) * cells as f64).floor() as usize).min(cells - 1)
    }
}

fn halve_once<T: Scalar>(w: &[T]) -> Vec<T> {
    w.chunks(2).map(|p| p[0] + p[1]).collect()
}

fn halve_to<T: Scalar>(mut w: Vec<T>, from: usize, to: usize) -> Vec<T> {
    for _ in to..from {
        w = halve_once(&w);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// `values[i]` holds on `[breakpoints[i], breakpoints[i+1])`.
    #[default]
    Constant,
    /// `values[i]` is the density at `breakpoints[i]`, linear in between.
    Linear,
}

/// A measure on an interval with a piecewise-constant or piecewise-linear
/// density, zero outside `[breakpoints[0], breakpoints[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeasure {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
}

impl DensityMeasure {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidMeasure("a density needs at least two breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("breakpoints must be finite and strictly increasing".into()));
        }
        let expected = match interpolation {
            Interpolation::Constant => breakpoints.len() - 1,
            Interpolation::Linear => breakpoints.len(),
        };
        if values.len() != expected {
            return Err(Error::Dimension { expected, got: values.len() });
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure("density values must be finite and nonnegative".into()));
        }
        Ok(Self { breakpoints, values, interpolation })
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(breakpoints, values, Interpolation::Constant)
    }

    pub fn piecewise_linear(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(breakpoints, values, Interpolation::Linear)
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::piecewise_constant(vec![a, b], vec![1.0 / (b - a)])
    }

    /// Validates and normalizes the file-level fields.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.breakpoints, self.values, self.interpolation)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().expect("two breakpoints"))
    }

    /// Density at `x` (right-continuous for piecewise-constant shapes).
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let piece = self.breakpoints.partition_point(|&b| b <= x).saturating_sub(1).min(self.breakpoints.len() - 2);
        match self.interpolation {
            Interpolation::Constant => self.values[piece],
            Interpolation::Linear => {
                let (x0, x1) = (self.breakpoints[piece], self.breakpoints[piece + 1]);
                let (v0, v1) = (self.values[piece], self.values[piece + 1]);
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// `∫_l^r` of the density.
    pub fn mass_between(&self, l: f64, r: f64) -> f64 {
        let mut acc = 0.0;
        for p in 0..self.breakpoints.len() - 1 {
            let (x0, x1) = (self.breakpoints[p], self.breakpoints[p + 1]);
            let lo = l.max(x0);
            let hi = r.min(x1);
            if hi <= lo {
                continue;
            }
            acc += match self.interpolation {
                Interpolation::Constant => self.values[p] * (hi - lo),
                Interpolation::Linear => {
                    let (v0, v1) = (self.values[p], self.values[p + 1]);
                    let at = |x: f64| v0 + (v1 - v0) * (x - x0) / (x1 - x0);
                    0.5 * (at(lo) + at(hi)) * (hi - lo)
                }
            };
        }
        acc
    }

    pub fn mass(&self) -> f64 {
        let (lo, hi) = self.support();
        self.mass_between(lo, hi)
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-12
    }

    /// Masses of consecutive cells `[bounds[i], bounds[i+1])`, walking the
    /// pieces once.
    fn cell_masses(&self, bounds: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; bounds.len() - 1];
        let mut p = 0;
        let pieces = self.breakpoints.len() - 1;
        for (i, o) in out.iter_mut().enumerate() {
            let (l, r) = (bounds[i], bounds[i + 1]);
            while p < pieces && self.breakpoints[p + 1] <= l {
                p += 1;
            }
            let mut q = p;
            while q < pieces && self.breakpoints[q] < r {
                let (x0, x1) = (self.breakpoints[q], self.breakpoints[q + 1]);
                let lo = l.max(x0);
                let hi = r.min(x1);
                if hi > lo {
                    *o += match self.interpolation {
                        Interpolation::Constant => self.values[q] * (hi - lo),
                        Interpolation::Linear => {
                            let (v0, v1) = (self.values[q], self.values[q + 1]);
                            let at = |x: f64| v0 + (v1 - v0) * (x - x0) / (x1 - x0);
                            0.5 * (at(lo) + at(hi)) * (hi - lo)
                        }
                    };
                }
                q += 1;
            }
        }
        out
    }

    /// `Σ_c w_c μ_c` for densities sharing breakpoints and interpolation.
    pub fn mixture(parts: &[(f64, &DensityMeasure)]) -> Result<Self> {
        let (_, first) = parts.first().ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for (w, d) in parts {
            if d.breakpoints != first.breakpoints || d.interpolation != first.interpolation {
                return Err(Error::InvalidArgument("mixture parts must share breakpoints and interpolation".into()));
            }
            if !(*w >= 0.0) {
                return Err(Error::InvalidArgument("mixture weights must be nonnegative".into()));
            }
            for (v, &x) in values.iter_mut().zip(&d.values) {
                *v += w * x;
            }
        }
        Self::new(first.breakpoints.clone(), values, first.interpolation)
    }
}

/// `∫ ω log(ω/ν)` for two piecewise-constant densities, evaluated piece by
/// piece on the merged breakpoints. `+∞` when `ω` charges a piece where `ν`
/// vanishes.
pub fn closed_form_entropy(omega: &DensityMeasure, nu: &DensityMeasure) -> Result<f64> {
    if omega.interpolation != Interpolation::Constant || nu.interpolation != Interpolation::Constant {
        return Err(Error::InvalidArgument("closed form needs piecewise-constant densities".into()));
    }
    let mut cuts: Vec<f64> = omega.breakpoints.iter().chain(&nu.breakpoints).copied().collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    cuts.dedup();
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let (p, q) = (omega.density(mid), nu.density(mid));
        if p > 0.0 {
            if q <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += (w[1] - w[0]) * p * (p / q).ln();
        }
    }
    Ok(acc)
}

/// An `n × n` block graphon whose cells are density measures.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGraphon {
    n: usize,
    cells: Vec<DensityMeasure>,
    symmetric: bool,
}

impl DensityGraphon {
    pub fn new(n: usize, cells: Vec<DensityMeasure>, symmetric: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraphon("block count must be positive".into()));
        }
        if cells.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: cells.len() });
        }
        if symmetric && (0..n).any(|i| (0..i).any(|j| cells[i * n + j] != cells[j * n + i])) {
            return Err(Error::InvalidGraphon("symmetric flag set but cells differ across the diagonal".into()));
        }
        Ok(Self { n, cells, symmetric })
    }

    pub fn constant(cell: DensityMeasure, n: usize) -> Result<Self> {
        Self::new(n, vec![cell; n * n], true)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn cell(&self, i: usize, j: usize) -> &DensityMeasure {
        &self.cells[i * self.n + j]
    }

    /// `Σ_{i,j} s_i t_j / n² · cells[i][j]` (cells must share breakpoints).
    pub fn aggregate(&self, s: &[f64], t: &[f64]) -> Result<DensityMeasure> {
        crate::measure::check_len(s, self.n)?;
        crate::measure::check_len(t, self.n)?;
        let n2 = (self.n * self.n) as f64;
        let parts: Vec<(f64, &DensityMeasure)> = (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .map(|(i, j)| (s[i] * t[j] / n2, self.cell(i, j)))
            .collect();
        DensityMeasure::mixture(&parts)
    }

    /// Relabels blocks: `cells'[i][j] = cells[σ(i)][σ(j)]`.
    pub fn relabel(&self, sigma: &crate::graphon::Permutation) -> Result<Self> {
        if sigma.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: sigma.len() });
        }
        let p = sigma.as_slice();
        let cells = (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.cell(p[i], p[j]).clone())
            .collect();
        Ok(Self { n: self.n, cells, symmetric: self.symmetric })
    }
}
