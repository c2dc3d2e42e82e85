//! Cut distances between step graphons.
//!
//! The labeled cut distance `d_□` maximizes the Lévy–Prokhorov distance of
//! the rectangle aggregates. For step graphons the supremum over measurable
//! rectangles is attained on unions of blocks, so the exact mode enumerates
//! block subsets. The unlabeled distance `δ_□` minimizes `d_□` over block
//! permutations of the second argument; it is reported as an upper bound
//! on the infimum over all measure-preserving relabelings.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::entropy::DualKernel;
use crate::error::{Error, Result};
use crate::graphon::{Permutation, StepGraphon};
use crate::lp::lp_distance_weights;
use crate::measure::same_space;
use crate::scalar::Scalar;

/// Largest block count for exhaustive permutation search.
pub const MAX_EXACT_PERMUTATION_BLOCKS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMode {
    /// Exhaustive search; the value is the exact optimum of the searched set.
    Exact,
    /// Local search over block subsets: a lower bound on `d_□`.
    HeuristicLowerBound,
    /// Permutation annealing with exact inner `d_□`: an upper bound on the
    /// block-permutation minimum.
    AnnealUpperBound,
    /// Permutation annealing over heuristic inner values: an estimate only.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationSearch {
    Exact,
    Anneal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutWitness {
    /// Row blocks of the optimizing rectangle.
    pub s: Vec<usize>,
    /// Column blocks of the optimizing rectangle.
    pub t: Vec<usize>,
    /// Relabeling applied to the second graphon (unlabeled distance only).
    pub permutation: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult<T> {
    pub value: T,
    pub witness: CutWitness,
    pub mode: CutMode,
    /// Block count of the grid the search ran on.
    pub blocks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutConfig {
    /// Largest block count for exhaustive subset enumeration in `d_□`.
    pub n_exact: usize,
    /// Random starts for the subset local search.
    pub starts: usize,
    pub seed: u64,
    /// Extra refinement factor applied before permutation search.
    pub refine: usize,
}

impl Default for CutConfig {
    fn default() -> Self {
        Self { n_exact: 10, starts: 32, seed: 0, refine: 1 }
    }
}

fn mask_to_blocks(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

fn indicator<T: Scalar>(blocks: &[usize], n: usize) -> Vec<T> {
    let mut v = vec![T::zero(); n];
    for &b in blocks {
        v[b] = T::one();
    }
    v
}

/// Re-evaluates a witness: the Lévy–Prokhorov distance of the rectangle
/// aggregates of `u` and `w` (relabeled by the witness permutation).
pub fn evaluate_witness<T: Scalar>(u: &StepGraphon<T>, w: &StepGraphon<T>, witness: &CutWitness) -> Result<T> {
    u.check_compatible(w)?;
    let w = match &witness.permutation {
        Some(p) => w.relabel(&Permutation::new(p.clone())?)?,
        None => w.clone(),
    };
    let s = indicator::<T>(&witness.s, u.n());
    let t = indicator::<T>(&witness.t, u.n());
    let a = u.aggregate(&s, &t)?;
    let b = w.aggregate(&s, &t)?;
    Ok(lp_distance_weights(u.space(), a.weights(), b.weights()))
}

/// Orders candidates by value, then by the lexicographically smaller key.
fn better<T: Scalar>(a: (T, &[usize], &[usize]), b: (T, &[usize], &[usize])) -> bool {
    a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
}

/// Labeled cut distance `d_□(U, W)`.
pub fn d_cut<T: Scalar>(u: &StepGraphon<T>, w: &StepGraphon<T>, config: &CutConfig) -> Result<CutResult<T>> {
    u.check_compatible(w)?;
    let n = u.n();
    let (value, s, t, mode) = if n <= config.n_exact.min(20) {
        let (v, s, t) = d_cut_exhaustive(u, w);
        (v, s, t, CutMode::Exact)
    } else {
        let (v, s, t) = d_cut_local_search(u, w, config.starts.max(1), config.seed);
        (v, s, t, CutMode::HeuristicLowerBound)
    };
    Ok(CutResult { value, witness: CutWitness { s, t, permutation: None }, mode, blocks: n })
}

/// Column sums over the row set `s`, pre-scaled by `1/n²`:
/// entry `j·k + z` is `Σ_{i∈s} cell(i, j)[z] / n²`.
fn column_sums<T: Scalar>(g: &StepGraphon<T>, rows: u64) -> Vec<T> {
    let n = g.n();
    let k = g.space().len();
    let scale = T::one() / T::lit((n * n) as f64);
    let mut out = vec![T::zero(); n * k];
    for i in (0..n).filter(|&i| rows >> i & 1 == 1) {
        for j in 0..n {
            for (o, &x) in out[j * k..(j + 1) * k].iter_mut().zip(g.cell(i, j)) {
                *o = *o + x * scale;
            }
        }
    }
    out
}

fn d_cut_exhaustive<T: Scalar>(u: &StepGraphon<T>, w: &StepGraphon<T>) -> (T, Vec<usize>, Vec<usize>) {
    let n = u.n();
    let k = u.space().len();
    let space = u.space();
    let best = (0u64..1 << n)
        .into_par_iter()
        .map(|s_mask| {
            let cu = column_sums(u, s_mask);
            let cw = column_sums(w, s_mask);
            let mut au = vec![T::zero(); k];
            let mut aw = vec![T::zero(); k];
            let mut best = (T::neg_infinity(), 0u64);
            for t_mask in 0u64..1 << n {
                au.iter_mut().for_each(|x| *x = T::zero());
                aw.iter_mut().for_each(|x| *x = T::zero());
                for j in (0..n).filter(|&j| t_mask >> j & 1 == 1) {
                    for z in 0..k {
                        au[z] = au[z] + cu[j * k + z];
                        aw[z] = aw[z] + cw[j * k + z];
                    }
                }
                let v = lp_distance_weights(space, &au, &aw);
                // masks increase, so strict improvement keeps the first (smallest) one
                if v > best.0 {
                    best = (v, t_mask);
                }
            }
            (best.0, mask_to_blocks(s_mask, n), mask_to_blocks(best.1, n))
        })
        .reduce(
            || (T::neg_infinity(), Vec::new(), Vec::new()),
            |a, b| if better((b.0, &b.1, &b.2), (a.0, &a.1, &a.2)) { b } else { a },
        );
    best
}

/// Incremental state of one rectangle `S × T` for both graphons.
struct Rectangle<'a, T: Scalar> {
    graphs: [&'a StepGraphon<T>; 2],
    s: Vec<bool>,
    t: Vec<bool>,
    /// `Σ_{j∈T} cell(i, j) / n²` per row `i`, per graphon.
    rows: [Vec<T>; 2],
    /// `Σ_{i∈S} cell(i, j) / n²` per column `j`, per graphon.
    cols: [Vec<T>; 2],
    agg: [Vec<T>; 2],
}

impl<'a, T: Scalar> Rectangle<'a, T> {
    fn new(u: &'a StepGraphon<T>, w: &'a StepGraphon<T>, s: Vec<bool>, t: Vec<bool>) -> Self {
        let n = u.n();
        let k = u.space().len();
        let scale = T::one() / T::lit((n * n) as f64);
        let graphs = [u, w];
        let mut rows = [vec![T::zero(); n * k], vec![T::zero(); n * k]];
        let mut cols = [vec![T::zero(); n * k], vec![T::zero(); n * k]];
        let mut agg = [vec![T::zero(); k], vec![T::zero(); k]];
        for g in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let c = graphs[g].cell(i, j);
                    for z in 0..k {
                        let x = c[z] * scale;
                        if t[j] {
                            rows[g][i * k + z] = rows[g][i * k + z] + x;
                        }
                        if s[i] {
                            cols[g][j * k + z] = cols[g][j * k + z] + x;
                        }
                        if s[i] && t[j] {
                            agg[g][z] = agg[g][z] + x;
                        }
                    }
                }
            }
        }
        Self { graphs, s, t, rows, cols, agg }
    }

    fn value(&self) -> T {
        lp_distance_weights(self.graphs[0].space(), &self.agg[0], &self.agg[1])
    }

    /// Value after flipping row `i` (if `row`) or column `i`, without committing.
    fn trial(&self, row: bool, i: usize, scratch: &mut [Vec<T>; 2]) -> T {
        let k = self.agg[0].len();
        let (on, delta) = if row { (self.s[i], &self.rows) } else { (self.t[i], &self.cols) };
        for g in 0..2 {
            for z in 0..k {
                let d = delta[g][i * k + z];
                scratch[g][z] = if on { self.agg[g][z] - d } else { self.agg[g][z] + d };
            }
        }
        lp_distance_weights(self.graphs[0].space(), &scratch[0], &scratch[1])
    }

    fn commit(&mut self, row: bool, i: usize, scratch: &[Vec<T>; 2]) {
        let n = self.s.len();
        let k = self.agg[0].len();
        let scale = T::one() / T::lit((n * n) as f64);
        let adding = if row { !self.s[i] } else { !self.t[i] };
        for g in 0..2 {
            self.agg[g].copy_from_slice(&scratch[g]);
            for other in 0..n {
                let c = if row { self.graphs[g].cell(i, other) } else { self.graphs[g].cell(other, i) };
                let target = if row { &mut self.cols[g] } else { &mut self.rows[g] };
                for z in 0..k {
                    let x = c[z] * scale;
                    let at = other * k + z;
                    target[at] = if adding { target[at] + x } else { target[at] - x };
                }
            }
        }
        if row {
            self.s[i] = adding;
        } else {
            self.t[i] = adding;
        }
    }
}

fn d_cut_local_search<T: Scalar>(
    u: &StepGraphon<T>,
    w: &StepGraphon<T>,
    starts: usize,
    seed: u64,
) -> (T, Vec<usize>, Vec<usize>) {
    let n = u.n();
    let k = u.space().len();
    let candidates: Vec<(T, Vec<usize>, Vec<usize>)> = (0..starts)
        .into_par_iter()
        .map(|start| {
            let (s, t) = if start == 0 {
                (vec![true; n], vec![true; n])
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(start as u64);
                ((0..n).map(|_| rng.gen::<bool>()).collect(), (0..n).map(|_| rng.gen::<bool>()).collect())
            };
            let mut rect = Rectangle::new(u, w, s, t);
            let mut current = rect.value();
            let mut scratch = [vec![T::zero(); k], vec![T::zero(); k]];
            for _pass in 0..200 {
                let mut improved = false;
                for row in [true, false] {
                    for i in 0..n {
                        let v = rect.trial(row, i, &mut scratch);
                        if v > current + T::lit(1e-15) {
                            rect.commit(row, i, &scratch);
                            current = v;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            let s: Vec<usize> = (0..n).filter(|&i| rect.s[i]).collect();
            let t: Vec<usize> = (0..n).filter(|&j| rect.t[j]).collect();
            // recompute from scratch so the value matches its witness exactly
            let a = u.aggregate(&indicator::<T>(&s, n), &indicator::<T>(&t, n)).expect("valid fractions");
            let b = w.aggregate(&indicator::<T>(&s, n), &indicator::<T>(&t, n)).expect("valid fractions");
            (lp_distance_weights(u.space(), a.weights(), b.weights()), s, t)
        })
        .collect();
    candidates
        .into_iter()
        .reduce(|a, b| if better((b.0, &b.1, &b.2), (a.0, &a.1, &a.2)) { b } else { a })
        .expect("at least one start")
}

fn prepare_pair<T: Scalar>(
    u: &StepGraphon<T>,
    w: &StepGraphon<T>,
    refine: usize,
) -> Result<(StepGraphon<T>, StepGraphon<T>)> {
    if !same_space(u.space(), w.space()) {
        return Err(Error::SpaceMismatch);
    }
    let (u, w) = StepGraphon::lift_to_common(u, w)?;
    Ok((u.refine(refine.max(1))?, w.refine(refine.max(1))?))
}

/// Unlabeled cut distance `δ_□(U, W)` over block permutations of the common
/// refinement (times `config.refine`).
pub fn delta_cut<T: Scalar>(
    u: &StepGraphon<T>,
    w: &StepGraphon<T>,
    search: PermutationSearch,
    config: &CutConfig,
) -> Result<CutResult<T>> {
    let (u, w) = prepare_pair(u, w, config.refine)?;
    let n = u.n();
    if search == PermutationSearch::Exact && n > MAX_EXACT_PERMUTATION_BLOCKS {
        return Err(Error::Refused(format!(
            "exact permutation search over {n} blocks exceeds the limit of {MAX_EXACT_PERMUTATION_BLOCKS}"
        )));
    }
    let inner_exact = n <= config.n_exact;
    let mode = match (search, inner_exact) {
        (PermutationSearch::Exact, true) => CutMode::Exact,
        (PermutationSearch::Anneal, true) => CutMode::AnnealUpperBound,
        (_, false) => CutMode::Heuristic,
    };
    let finish = |r: CutResult<T>, sigma: &Permutation| CutResult {
        value: r.value,
        witness: CutWitness { s: r.witness.s, t: r.witness.t, permutation: Some(sigma.as_slice().to_vec()) },
        mode,
        blocks: n,
    };
    // Relabeling a constant graphon changes nothing.
    if u.is_constant() || w.is_constant() {
        let id = Permutation::identity(n);
        return Ok(finish(d_cut(&u, &w, config)?, &id));
    }
    match search {
        PermutationSearch::Exact => {
            let mut perms = vec![Permutation::identity(n)];
            let mut p = Permutation::identity(n);
            while p.next_lexicographic() {
                perms.push(p.clone());
            }
            let values: Vec<Result<CutResult<T>>> =
                perms.par_iter().map(|sigma| d_cut(&u, &w.relabel(sigma)?, config)).collect();
            let mut best: Option<(CutResult<T>, usize)> = None;
            for (idx, r) in values.into_iter().enumerate() {
                let r = r?;
                // strict improvement keeps the lexicographically first permutation
                if best.as_ref().map_or(true, |(b, _)| r.value < b.value) {
                    best = Some((r, idx));
                }
            }
            let (r, idx) = best.expect("at least one permutation");
            Ok(finish(r, &perms[idx]))
        }
        PermutationSearch::Anneal => {
            let init = first_moment_assignment(&u, &w);
            let objective = |sigma: &Permutation| -> Result<CutResult<T>> { d_cut(&u, &w.relabel(sigma)?, config) };
            let (sigma, r) = anneal(init, n, config.seed, |s| objective(s).map(|r| (r.value, r)), Goal::Minimize)?;
            Ok(finish(r, &sigma))
        }
    }
}

fn row_average<T: Scalar>(g: &StepGraphon<T>, i: usize) -> Vec<T> {
    let k = g.space().len();
    let inv = T::one() / T::lit(g.n() as f64);
    let mut out = vec![T::zero(); k];
    for j in 0..g.n() {
        for (o, &x) in out.iter_mut().zip(g.cell(i, j)) {
            *o = *o + x * inv;
        }
    }
    out
}

/// Matches blocks of `u` to blocks of `w` by the Lévy–Prokhorov distance of
/// their row-average measures, solved as a linear assignment.
pub fn first_moment_assignment<T: Scalar>(u: &StepGraphon<T>, w: &StepGraphon<T>) -> Permutation {
    let n = u.n();
    let ru: Vec<Vec<T>> = (0..n).map(|i| row_average(u, i)).collect();
    let rw: Vec<Vec<T>> = (0..n).map(|i| row_average(w, i)).collect();
    let mut cost = Vec::with_capacity(n * n);
    for a in &ru {
        for b in &rw {
            cost.push(lp_distance_weights(u.space(), a, b));
        }
    }
    Permutation::new(min_cost_assignment(&cost, n)).expect("assignment is a permutation")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Minimize,
    Maximize,
}

/// Geometric-cooling annealing over permutations with swap-two-blocks
/// moves: 200 temperature levels of `n` proposals, ratio 0.97, initial
/// temperature from the spread of objective values around the start.
fn anneal<T: Scalar, R: Clone>(
    init: Permutation,
    n: usize,
    seed: u64,
    mut eval: impl FnMut(&Permutation) -> Result<(T, R)>,
    goal: Goal,
) -> Result<(Permutation, R)> {
    const LEVELS: usize = 200;
    const RATIO: f64 = 0.97;
    let sign = match goal {
        Goal::Minimize => 1.0,
        Goal::Maximize => -1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v0, r0) = eval(&init)?;
    let mut current = (init.clone(), sign * v0.as_f64());
    let mut best = (init, sign * v0.as_f64(), r0);
    if n < 2 {
        return Ok((best.0, best.2));
    }
    let mut probe = vec![current.1];
    for _ in 0..n {
        let mut p = current.0.clone();
        let (a, b) = two_distinct(&mut rng, n);
        p.swap(a, b);
        probe.push(sign * eval(&p)?.0.as_f64());
    }
    let spread = probe.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - probe.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut temp = if spread > 0.0 { spread } else { 1e-3 * (v0.as_f64().abs() + 1e-12) };
    for _ in 0..LEVELS {
        for _ in 0..n {
            let mut p = current.0.clone();
            let (a, b) = two_distinct(&mut rng, n);
            p.swap(a, b);
            let (v, r) = eval(&p)?;
            let cost = sign * v.as_f64();
            let delta = cost - current.1;
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp() {
                if cost < best.1 || (cost == best.1 && p < best.0) {
                    best = (p.clone(), cost, r);
                }
                current = (p, cost);
            }
        }
        temp *= RATIO;
    }
    Ok((best.0, best.2))
}

fn two_distinct(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let picks: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(rng, 2).copied().collect();
    (picks[0], picks[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayResult<T> {
    pub value: T,
    pub permutation: Vec<usize>,
    pub mode: CutMode,
}

fn refine_kernel<T: Scalar>(a: &DualKernel<T>, factor: usize) -> Result<DualKernel<T>> {
    if factor == 1 {
        return Ok(a.clone());
    }
    let m = a.n() * factor;
    let mut values = Vec::with_capacity(m * m * a.points());
    for i in 0..m {
        for j in 0..m {
            values.extend_from_slice(a.at(i / factor, j / factor));
        }
    }
    DualKernel::new(m, a.points(), values)
}

fn overlay_objective<T: Scalar>(w: &StepGraphon<T>, a: &DualKernel<T>, sigma: &Permutation) -> T {
    let n = w.n();
    let s = sigma.as_slice();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            acc = acc + a.at(i, j).iter().zip(w.cell(s[i], s[j])).map(|(&x, &p)| x * p).sum::<T>();
        }
    }
    acc / T::lit((n * n) as f64)
}

/// Overlay functional: `max_σ (1/n²) Σ_{i,j} ⟨A_ij, W_{σ(i)σ(j)}⟩` over block
/// permutations (exhaustive up to 7 blocks, annealed beyond).
pub fn overlay<T: Scalar>(w: &StepGraphon<T>, a: &DualKernel<T>, seed: u64) -> Result<OverlayResult<T>> {
    if a.points() != w.space().len() {
        return Err(Error::Dimension { expected: w.space().len(), got: a.points() });
    }
    let l = {
        let (x, y) = (w.n(), a.n());
        let mut g = (x, y);
        while g.1 != 0 {
            g = (g.1, g.0 % g.1);
        }
        x / g.0 * y
    };
    let w = w.refine(l / w.n())?;
    let a = refine_kernel(a, l / a.n())?;
    let n = l;
    if n <= MAX_EXACT_PERMUTATION_BLOCKS {
        let mut p = Permutation::identity(n);
        let mut best = (overlay_objective(&w, &a, &p), p.clone());
        while p.next_lexicographic() {
            let v = overlay_objective(&w, &a, &p);
            if v > best.0 {
                best = (v, p.clone());
            }
        }
        return Ok(OverlayResult { value: best.0, permutation: best.1.as_slice().to_vec(), mode: CutMode::Exact });
    }
    let (sigma, value) = anneal(
        Permutation::identity(n),
        n,
        seed,
        |s| {
            let v = overlay_objective(&w, &a, s);
            Ok((v, v))
        },
        Goal::Maximize,
    )?;
    Ok(OverlayResult { value, permutation: sigma.as_slice().to_vec(), mode: CutMode::Heuristic })
}
