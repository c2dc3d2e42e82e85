//! Minimizing the graphon rate over sets cut out by linear mean constraints.
//!
//! A constraint bounds the average `f`-mean over a set of blocks (all blocks
//! for the global scope). One global constraint is solved in closed form by
//! exponential tilting. Everything else goes through projected ascent on the
//! concave Lagrange dual, whose inner minimization is again an exact tilt of
//! `ν` in every block.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::entropy::graphon_entropy;
use crate::error::{Error, Result};
use crate::graphon::StepGraphon;
use crate::measure::{check_len, kl_divergence, tilt_to_mean, tilt_weights, FiniteMeasure, MeasureKind};
use crate::scalar::Scalar;

/// Iteration cap for the dual ascent.
pub const MAX_DUAL_ITERATIONS: usize = 100_000;
/// Multiplier size at which the constraints are declared infeasible.
const DIVERGENCE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = ">=", alias = "ge")]
    AtLeast,
    #[serde(rename = "<=", alias = "le")]
    AtMost,
}

impl Direction {
    /// `+1` for `≥`, `-1` for `≤`.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Direction::AtLeast => T::one(),
            Direction::AtMost => -T::one(),
        }
    }

    pub fn holds<T: Scalar>(self, value: T, threshold: T, tol: T) -> bool {
        match self {
            Direction::AtLeast => value >= threshold - tol,
            Direction::AtMost => value <= threshold + tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    Global,
    /// Flattened block indices `i·n + j`; the constraint bounds their average.
    Blocks(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint<T> {
    pub f: Vec<T>,
    pub direction: Direction,
    pub threshold: T,
    #[serde(default)]
    pub scope: Scope,
}

impl<T: Scalar> Constraint<T> {
    pub fn global(f: Vec<T>, direction: Direction, threshold: T) -> Self {
        Self { f, direction, threshold, scope: Scope::Global }
    }

    fn cells(&self, n: usize) -> Vec<usize> {
        match &self.scope {
            Scope::Global => (0..n * n).collect(),
            Scope::Blocks(b) => b.clone(),
        }
    }

    /// Average of the block means of `f` over the scope.
    pub fn mean(&self, w: &StepGraphon<T>) -> T {
        let cells = self.cells(w.n());
        let total: T = cells
            .iter()
            .map(|&c| w.cell(c / w.n(), c % w.n()).iter().zip(&self.f).map(|(&p, &x)| p * x).sum::<T>())
            .sum();
        total / T::lit(cells.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet<T> {
    pub n_blocks: usize,
    #[serde(default)]
    pub constraints: Vec<Constraint<T>>,
    pub tolerance: T,
}

impl<T: Scalar> ConstraintSet<T> {
    pub fn new(n_blocks: usize, constraints: Vec<Constraint<T>>, tolerance: T) -> Result<Self> {
        let set = Self { n_blocks, constraints, tolerance };
        set.validate(None)?;
        Ok(set)
    }

    pub fn unconstrained(n_blocks: usize) -> Self {
        Self { n_blocks, constraints: Vec::new(), tolerance: T::lit(1e-9) }
    }

    pub fn single(f: Vec<T>, direction: Direction, threshold: T) -> Self {
        Self { n_blocks: 1, constraints: vec![Constraint::global(f, direction, threshold)], tolerance: T::lit(1e-9) }
    }

    /// Structural checks, plus the point count when a reference is given.
    pub fn validate(&self, points: Option<usize>) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::InvalidArgument("n_blocks must be positive".into()));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let n2 = self.n_blocks * self.n_blocks;
        for (k, c) in self.constraints.iter().enumerate() {
            if !c.threshold.is_finite() || c.f.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("constraint {k} has non-finite entries")));
            }
            if let Some(p) = points {
                check_len(&c.f, p)?;
            }
            if let Scope::Blocks(cells) = &c.scope {
                if cells.is_empty() || cells.iter().any(|&x| x >= n2) {
                    return Err(Error::InvalidArgument(format!("constraint {k} has an invalid block scope")));
                }
                let mut sorted = cells.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != cells.len() {
                    return Err(Error::InvalidArgument(format!("constraint {k} repeats a block")));
                }
            }
        }
        Ok(())
    }

    /// Whether every constraint holds for `w` within the tolerance.
    pub fn is_satisfied(&self, w: &StepGraphon<T>) -> bool {
        self.constraints.iter().all(|c| c.direction.holds(c.mean(w), c.threshold, self.tolerance))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Unconstrained,
    ClosedForm,
    DualAscent,
}

#[derive(Debug, Clone)]
pub struct MinimizerResult<T: Scalar> {
    pub graphon: StepGraphon<T>,
    pub value: T,
    /// Signed tilt coefficient of each constraint: block `c` of the minimizer
    /// is `ν · exp(Σ_{k ∋ c} dual[k] · f_k)` up to normalization.
    pub dual: Vec<T>,
    pub kkt_residual: T,
    pub method: SolveMethod,
    pub iterations: usize,
}

fn full_support<T: Scalar>(nu: &FiniteMeasure<T>) -> Result<()> {
    if nu.kind() != MeasureKind::Probability {
        return Err(Error::InvalidMeasure("reference measure must be a probability measure".into()));
    }
    match nu.weights().iter().position(|&v| v <= T::zero()) {
        Some(z) => Err(Error::Support { row: 0, col: 0, point: z, reason: "reference measure vanishes" }),
        None => Ok(()),
    }
}

fn range<T: Scalar>(f: &[T]) -> (T, T) {
    f.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Minimizes `H̃(W | ν)` over `n_blocks`-step graphons satisfying the
/// constraints.
pub fn minimize_rate<T: Scalar>(nu: &FiniteMeasure<T>, set: &ConstraintSet<T>) -> Result<MinimizerResult<T>> {
    full_support(nu)?;
    set.validate(Some(nu.space().len()))?;
    for (k, c) in set.constraints.iter().enumerate() {
        let (lo, hi) = range(&c.f);
        let infeasible = match c.direction {
            Direction::AtLeast => c.threshold > hi + set.tolerance,
            Direction::AtMost => c.threshold < lo - set.tolerance,
        };
        if infeasible {
            return Err(Error::Infeasible(format!(
                "constraint {k}: threshold {} outside the attainable range [{lo}, {hi}]",
                c.threshold
            )));
        }
    }
    let n = set.n_blocks;
    let base = StepGraphon::constant(nu, n)?;
    if set.constraints.is_empty() || set.is_satisfied(&base) {
        let mut result = MinimizerResult {
            graphon: base,
            value: T::zero(),
            dual: vec![T::zero(); set.constraints.len()],
            kkt_residual: T::zero(),
            method: SolveMethod::Unconstrained,
            iterations: 0,
        };
        result.kkt_residual = kkt_check(&result, nu, set)?;
        return Ok(result);
    }
    let mut result = match set.constraints.as_slice() {
        [c] if c.scope == Scope::Global || c.cells(n).len() == n * n => closed_form(nu, c, n)?,
        _ => dual_ascent(nu, set)?,
    };
    result.kkt_residual = kkt_check(&result, nu, set)?;
    Ok(result)
}

fn closed_form<T: Scalar>(nu: &FiniteMeasure<T>, c: &Constraint<T>, n: usize) -> Result<MinimizerResult<T>> {
    let (theta, tilted) = tilt_to_mean(nu, &c.f, c.threshold)?;
    let value = kl_divergence(&tilted, nu)?;
    Ok(MinimizerResult {
        graphon: StepGraphon::constant(&tilted, n)?,
        value,
        dual: vec![theta],
        kkt_residual: T::zero(),
        method: SolveMethod::ClosedForm,
        iterations: 0,
    })
}

/// Blocks sharing the same set of active constraints share their optimal
/// law, so the ascent works on these classes.
struct BlockClasses {
    /// Constraint indices per class.
    members: Vec<Vec<usize>>,
    /// Number of blocks per class.
    sizes: Vec<usize>,
    /// Class of every block.
    of_cell: Vec<usize>,
}

fn block_classes<T: Scalar>(set: &ConstraintSet<T>) -> BlockClasses {
    let n2 = set.n_blocks * set.n_blocks;
    let mut sig = vec![Vec::new(); n2];
    for (k, c) in set.constraints.iter().enumerate() {
        for cell in c.cells(set.n_blocks) {
            sig[cell].push(k);
        }
    }
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut classes = BlockClasses { members: Vec::new(), sizes: Vec::new(), of_cell: Vec::with_capacity(n2) };
    for s in sig {
        let next = classes.members.len();
        let id = *index.entry(s.clone()).or_insert(next);
        if id == next {
            classes.members.push(s);
            classes.sizes.push(0);
        }
        classes.sizes[id] += 1;
        classes.of_cell.push(id);
    }
    classes
}

fn tilt_function<T: Scalar>(set: &ConstraintSet<T>, members: &[usize], coef: &[T], k: usize) -> Vec<T> {
    let mut phi = vec![T::zero(); k];
    for &c in members {
        for (p, &x) in phi.iter_mut().zip(&set.constraints[c].f) {
            *p = *p + coef[c] * x;
        }
    }
    phi
}

fn dual_ascent<T: Scalar>(nu: &FiniteMeasure<T>, set: &ConstraintSet<T>) -> Result<MinimizerResult<T>> {
    let n = set.n_blocks;
    let n2 = T::lit((n * n) as f64);
    let k = nu.space().len();
    let m = set.constraints.len();
    let classes = block_classes(set);
    let scope_len: Vec<T> = set.constraints.iter().map(|c| T::lit(c.cells(n).len() as f64)).collect();
    let signs: Vec<T> = set.constraints.iter().map(|c| c.direction.sign()).collect();
    let ranges: Vec<T> = set.constraints.iter().map(|c| { let (lo, hi) = range(&c.f); hi - lo }).collect();

    // Lipschitz bound on the dual gradient from Var ≤ range²/4 in each block.
    let mut lip2 = T::zero();
    for a in 0..m {
        for b in 0..m {
            let shared: usize = classes
                .members
                .iter()
                .zip(&classes.sizes)
                .filter(|(mem, _)| mem.contains(&a) && mem.contains(&b))
                .map(|(_, &s)| s)
                .sum();
            let h = n2 * T::lit(shared as f64) / (scope_len[a] * scope_len[b]) * ranges[a] * ranges[b] / T::lit(4.0);
            lip2 = lip2 + h * h;
        }
    }
    let lip = if lip2 > T::zero() { lip2.sqrt() } else { T::one() };

    // θ ≥ 0 are the multipliers of s_k (t_k − mean_k) ≤ 0; the tilt
    // coefficient of constraint k inside its scope is s_k θ_k n² / |S_k|.
    // Weak duality: no feasible graphon has rate above max_z log(1/ν(z)), so a
    // dual value beyond it certifies infeasibility.
    let rate_cap = nu.weights().iter().fold(T::zero(), |a, &v| a.max(-v.ln()));
    let mut theta = vec![T::zero(); m];
    let coef = |theta: &[T]| -> Vec<T> { (0..m).map(|c| signs[c] * theta[c] * n2 / scope_len[c]).collect() };
    let mut best: Option<(T, Vec<T>, Vec<Vec<T>>)> = None;
    let mut iterations = 0;
    for it in 0..MAX_DUAL_ITERATIONS {
        iterations = it + 1;
        let co = coef(&theta);
        let laws: Vec<Vec<T>> = classes
            .members
            .iter()
            .map(|mem| tilt_weights(nu.weights(), &tilt_function(set, mem, &co, k), T::one()))
            .collect();
        let mut means = vec![T::zero(); m];
        for (ci, mem) in classes.members.iter().enumerate() {
            for &c in mem {
                let mean: T = laws[ci].iter().zip(&set.constraints[c].f).map(|(&p, &x)| p * x).sum();
                means[c] = means[c] + T::lit(classes.sizes[ci] as f64) * mean;
            }
        }
        let grad: Vec<T> = (0..m)
            .map(|c| signs[c] * (set.constraints[c].threshold - means[c] / scope_len[c]))
            .collect();
        let dual_value = (0..m).fold(T::zero(), |a, c| a + theta[c] * signs[c] * set.constraints[c].threshold)
            - classes
                .members
                .iter()
                .zip(&classes.sizes)
                .map(|(mem, &s)| {
                    T::lit(s as f64) * crate::measure::log_mgf_weights(&tilt_function(set, mem, &co, k), nu.weights())
                })
                .sum::<T>()
                / n2;
        if dual_value > rate_cap + set.tolerance {
            return Err(Error::Infeasible(format!(
                "dual value {dual_value} exceeds every attainable rate; the constraints admit no solution"
            )));
        }
        let violation = grad.iter().fold(T::zero(), |a, &g| a.max(g));
        let slackness = (0..m).fold(T::zero(), |a, c| a.max(theta[c] * grad[c].abs()));
        if violation <= set.tolerance {
            let value: T = classes
                .sizes
                .iter()
                .zip(&laws)
                .map(|(&s, law)| T::lit(s as f64) * crate::measure::kl_weights(law, nu.weights()))
                .sum::<T>()
                / n2;
            if best.as_ref().map_or(true, |(v, _, _)| value < *v) {
                best = Some((value, co.clone(), laws.clone()));
            }
            if slackness <= set.tolerance {
                break;
            }
        }
        for c in 0..m {
            theta[c] = (theta[c] + grad[c] / lip).max(T::zero());
        }
        if theta.iter().any(|&t| t > T::lit(DIVERGENCE)) {
            return Err(Error::Infeasible("constraint multipliers diverge; the constraints admit no solution".into()));
        }
    }
    let (_, dual, laws) = best.ok_or_else(|| {
        Error::Numerical(format!("no feasible iterate within {MAX_DUAL_ITERATIONS} dual steps"))
    })?;
    let mut weights = Vec::with_capacity(n * n * k);
    for &ci in &classes.of_cell {
        weights.extend_from_slice(&laws[ci]);
    }
    let symmetric = (0..n).all(|i| (0..i).all(|j| classes.of_cell[i * n + j] == classes.of_cell[j * n + i]));
    let graphon = StepGraphon::from_weights(nu.space().clone(), n, weights, symmetric)?;
    let value = graphon_entropy(&graphon, nu)?;
    Ok(MinimizerResult { graphon, value, dual, kkt_residual: T::zero(), method: SolveMethod::DualAscent, iterations })
}

/// Largest violation of the optimality conditions: stationarity
/// `|log(W_c(z)/ν(z)) − φ_c(z) + log Σ_z ν e^{φ_c}|` over blocks and points,
/// multiplier signs, complementary slackness and primal feasibility.
pub fn kkt_check<T: Scalar>(result: &MinimizerResult<T>, nu: &FiniteMeasure<T>, set: &ConstraintSet<T>) -> Result<T> {
    let w = &result.graphon;
    let n = w.n();
    if n != set.n_blocks {
        return Err(Error::Dimension { expected: set.n_blocks, got: n });
    }
    check_len(&result.dual, set.constraints.len())?;
    let k = nu.space().len();
    let mut members = vec![Vec::new(); n * n];
    for (c, con) in set.constraints.iter().enumerate() {
        for cell in con.cells(n) {
            members[cell].push(c);
        }
    }
    let mut residual = T::zero();
    for (cell, mem) in members.iter().enumerate() {
        let law = w.cell(cell / n, cell % n);
        let phi = tilt_function(set, mem, &result.dual, k);
        if phi.iter().any(|x| !x.is_finite()) || mem.iter().any(|&c| !result.dual[c].is_finite()) {
            // Infinite multipliers: compare with the limiting tilt instead.
            let limit = limiting_law(nu.weights(), set, mem, &result.dual);
            residual = law.iter().zip(&limit).fold(residual, |r, (&a, &b)| r.max((a - b).abs()));
            continue;
        }
        // Normalizer relative to the untilted one, so `φ = 0` is exact.
        let lz = crate::measure::log_mgf_weights(&phi, nu.weights())
            - crate::measure::log_mgf_weights(&vec![T::zero(); k], nu.weights());
        for z in 0..k {
            let r = if law[z] > T::zero() {
                ((law[z] / nu.weights()[z]).ln() - phi[z] + lz).abs()
            } else {
                T::infinity()
            };
            residual = residual.max(r);
        }
    }
    for (c, con) in set.constraints.iter().enumerate() {
        let s: T = con.direction.sign();
        let wrong_sign = (-s * result.dual[c]).max(T::zero());
        let slack = s * (con.mean(w) - con.threshold);
        let primal = (-slack).max(T::zero());
        let comp = if result.dual[c] == T::zero() { T::zero() } else { (result.dual[c] * slack).abs() };
        residual = residual.max(wrong_sign).max(primal).max(if comp.is_nan() { T::zero() } else { comp });
    }
    Ok(residual)
}

fn limiting_law<T: Scalar>(nu: &[T], set: &ConstraintSet<T>, mem: &[usize], dual: &[T]) -> Vec<T> {
    // Only a single infinite multiplier is meaningful here: the closed form.
    match mem.iter().find(|&&c| dual[c].is_infinite()) {
        Some(&c) => tilt_weights(nu, &set.constraints[c].f, dual[c]),
        None => nu.to_vec(),
    }
}

/// `H̃(W | ν)` as a function of the raw weight buffer.
pub fn objective_value<T: Scalar>(weights: &[T], n: usize, nu: &[T]) -> T {
    let k = nu.len();
    let mut acc = T::zero();
    for cell in weights.chunks(k) {
        for (&p, &v) in cell.iter().zip(nu) {
            if p > T::zero() {
                acc = acc + p * (p / v).ln();
            }
        }
    }
    acc / T::lit((n * n) as f64)
}

/// Gradient of [`objective_value`] in the raw weights:
/// `(log(W_c(z)/ν(z)) + 1) / n²`.
pub fn objective_gradient<T: Scalar>(w: &StepGraphon<T>, nu: &FiniteMeasure<T>) -> Result<Vec<T>> {
    if nu.space().len() != w.space().len() {
        return Err(Error::SpaceMismatch);
    }
    let n2 = T::lit((w.n() * w.n()) as f64);
    let k = nu.space().len();
    Ok(w
        .weights()
        .iter()
        .enumerate()
        .map(|(i, &p)| ((p / nu.weights()[i % k]).ln() + T::one()) / n2)
        .collect())
}
