//! Block-constant probability graphons.
//!
//! A [`StepGraphon`] with `n` blocks is constant on each square
//! `S_i × S_j` of the uniform `n`-grid of `[0,1]²`, so every block has
//! Lebesgue mass `1/n²`. Cells are stored row-major as one flat weight
//! buffer of length `n·n·|Z|`.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::measure::{check_len, same_space, FiniteMeasure, MeasureKind, WeightSpace};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct StepGraphon<T: Scalar> {
    n: usize,
    space: Arc<WeightSpace<T>>,
    weights: Vec<T>,
    symmetric: bool,
}

impl<T: Scalar> PartialEq for StepGraphon<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.symmetric == other.symmetric
            && self.weights == other.weights
            && same_space(&self.space, &other.space)
    }
}

impl<T: Scalar> StepGraphon<T> {
    /// Builds a graphon from row-major cells. With `symmetric = true` the
    /// cells must already satisfy `cells[i][j] == cells[j][i]` exactly.
    pub fn new(space: Arc<WeightSpace<T>>, n: usize, cells: Vec<FiniteMeasure<T>>, symmetric: bool) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: cells.len() });
        }
        let mut weights = Vec::with_capacity(n * n * space.len());
        for (idx, c) in cells.iter().enumerate() {
            if !same_space(c.space(), &space) {
                return Err(Error::SpaceMismatch);
            }
            if c.kind() != MeasureKind::Probability {
                return Err(Error::InvalidGraphon(format!("cell {idx} is not a probability measure")));
            }
            weights.extend_from_slice(c.weights());
        }
        Self::from_weights(space, n, weights, symmetric)
    }

    /// Builds from the flat row-major weight buffer, validating each cell.
    pub fn from_weights(space: Arc<WeightSpace<T>>, n: usize, weights: Vec<T>, symmetric: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraphon("block count must be positive".into()));
        }
        let k = space.len();
        if weights.len() != n * n * k {
            return Err(Error::Dimension { expected: n * n * k, got: weights.len() });
        }
        for cell in 0..n * n {
            let w = &weights[cell * k..(cell + 1) * k];
            if w.iter().any(|&x| x.is_nan() || x < T::zero() || !x.is_finite()) {
                return Err(Error::InvalidGraphon(format!("cell {cell} has a negative or non-finite weight")));
            }
            let mass: T = w.iter().copied().sum();
            if (mass - T::one()).abs() > T::mass_tol() {
                return Err(Error::InvalidGraphon(format!("cell {cell} has mass {mass}")));
            }
        }
        let g = Self { n, space, weights, symmetric };
        if symmetric && !g.cells_symmetric() {
            return Err(Error::InvalidGraphon("symmetric flag set but cells differ across the diagonal".into()));
        }
        Ok(g)
    }

    pub(crate) fn from_weights_unchecked(space: Arc<WeightSpace<T>>, n: usize, weights: Vec<T>, symmetric: bool) -> Self {
        debug_assert_eq!(weights.len(), n * n * space.len());
        Self { n, space, weights, symmetric }
    }

    /// The graphon equal to `cell` on every block.
    pub fn constant(cell: &FiniteMeasure<T>, n: usize) -> Result<Self> {
        if cell.kind() != MeasureKind::Probability {
            return Err(Error::InvalidGraphon("constant cell must be a probability measure".into()));
        }
        if n == 0 {
            return Err(Error::InvalidGraphon("block count must be positive".into()));
        }
        let weights = cell.weights().repeat(n * n);
        Ok(Self { n, space: cell.space().clone(), weights, symmetric: true })
    }

    fn cells_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.cell(i, j) == self.cell(j, i)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn space(&self) -> &Arc<WeightSpace<T>> {
        &self.space
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &[T] {
        let k = self.space.len();
        let at = (i * self.n + j) * k;
        &self.weights[at..at + k]
    }

    pub fn cell_measure(&self, i: usize, j: usize) -> FiniteMeasure<T> {
        FiniteMeasure::from_parts_unchecked(self.space.clone(), self.cell(i, j).to_vec(), MeasureKind::Probability)
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        if self.n != other.n {
            return Err(Error::Dimension { expected: self.n, got: other.n });
        }
        Ok(())
    }

    /// `W(A; ·)` for the weighted rectangle `A = (s, t)`: the subprobability
    /// `Σ_{i,j} s_i t_j / n² · cells[i][j]`.
    pub fn aggregate(&self, s: &[T], t: &[T]) -> Result<FiniteMeasure<T>> {
        check_len(s, self.n)?;
        check_len(t, self.n)?;
        for &x in s.iter().chain(t) {
            if x.is_nan() || x < T::zero() || x > T::one() {
                return Err(Error::InvalidArgument(format!("block fraction {x} outside [0, 1]")));
            }
        }
        let k = self.space.len();
        let mut out = vec![T::zero(); k];
        let n2 = T::lit((self.n * self.n) as f64);
        for i in 0..self.n {
            if s[i] == T::zero() {
                continue;
            }
            for j in 0..self.n {
                let c = s[i] * t[j] / n2;
                if c == T::zero() {
                    continue;
                }
                for (o, &w) in out.iter_mut().zip(self.cell(i, j)) {
                    *o = *o + c * w;
                }
            }
        }
        Ok(FiniteMeasure::from_parts_unchecked(self.space.clone(), out, MeasureKind::Subprobability))
    }

    /// `M_W`, the aggregate over the whole square.
    pub fn total_measure(&self) -> FiniteMeasure<T> {
        let ones = vec![T::one(); self.n];
        self.aggregate(&ones, &ones).expect("unit fractions are valid")
    }

    /// Averages over the rectangles of `partition`, keeping the original
    /// `n`-grid: each cell is replaced by the mean of its group rectangle.
    pub fn step(&self, partition: &Partition) -> Result<Self> {
        partition.check_covers(self.n)?;
        let k = self.space.len();
        let owner = partition.owner(self.n);
        let groups = partition.groups();
        let averages = self.group_averages(groups);
        let g = groups.len();
        let mut weights = Vec::with_capacity(self.weights.len());
        for i in 0..self.n {
            for j in 0..self.n {
                let at = (owner[i] * g + owner[j]) * k;
                weights.extend_from_slice(&averages[at..at + k]);
            }
        }
        Ok(Self::from_weights_unchecked(self.space.clone(), self.n, weights, self.symmetric))
    }

    /// The quotient graphon with one block per group. Only defined when all
    /// groups have the same size, so that quotient blocks keep equal mass.
    pub fn step_quotient(&self, partition: &Partition) -> Result<Self> {
        partition.check_covers(self.n)?;
        let groups = partition.groups();
        let size = groups[0].len();
        if groups.iter().any(|g| g.len() != size) {
            return Err(Error::InvalidPartition(
                "quotient requires groups of equal size; use step for ragged groups".into(),
            ));
        }
        let weights = self.group_averages(groups);
        Ok(Self::from_weights_unchecked(self.space.clone(), groups.len(), weights, self.symmetric))
    }

    fn group_averages(&self, groups: &[Vec<usize>]) -> Vec<T> {
        let k = self.space.len();
        let g = groups.len();
        let mut out = vec![T::zero(); g * g * k];
        for (a, ga) in groups.iter().enumerate() {
            for (b, gb) in groups.iter().enumerate() {
                let count = T::lit((ga.len() * gb.len()) as f64);
                let dst = &mut out[(a * g + b) * k..(a * g + b + 1) * k];
                for &i in ga {
                    for &j in gb {
                        for (d, &w) in dst.iter_mut().zip(self.cell(i, j)) {
                            *d = *d + w;
                        }
                    }
                }
                dst.iter_mut().for_each(|d| *d = *d / count);
            }
        }
        out
    }

    /// The `k`-block approximant: averages over contiguous groups of size
    /// `n / k`. Requires `k | n`.
    pub fn approximant(&self, k: usize) -> Result<Self> {
        if k == 0 || self.n % k != 0 {
            return Err(Error::InvalidArgument(format!(
                "approximant level {k} must divide the block count {}",
                self.n
            )));
        }
        self.step_quotient(&Partition::contiguous(self.n, k)?)
    }

    /// Splits every block into `factor` equal sub-blocks (same graphon as a
    /// function on `[0,1]²`).
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let m = self.n * factor;
        let mut weights = Vec::with_capacity(m * m * self.space.len());
        for i in 0..m {
            for j in 0..m {
                weights.extend_from_slice(self.cell(i / factor, j / factor));
            }
        }
        Ok(Self::from_weights_unchecked(self.space.clone(), m, weights, self.symmetric))
    }

    /// `W^σ`: `cells'[i][j] = cells[σ(i)][σ(j)]`.
    pub fn relabel(&self, sigma: &Permutation) -> Result<Self> {
        if sigma.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: sigma.len() });
        }
        let k = self.space.len();
        let mut weights = Vec::with_capacity(self.weights.len());
        for i in 0..self.n {
            for j in 0..self.n {
                weights.extend_from_slice(self.cell(sigma.0[i], sigma.0[j]));
            }
        }
        debug_assert_eq!(weights.len(), self.n * self.n * k);
        Ok(Self::from_weights_unchecked(self.space.clone(), self.n, weights, self.symmetric))
    }

    /// The real-valued graphon `W[f]`: entry `(i, j)` is `⟨f, cells[i][j]⟩`.
    pub fn apply_function(&self, f: &[T]) -> Result<Array2<T>> {
        check_len(f, self.space.len())?;
        Ok(Array2::from_shape_fn((self.n, self.n), |(i, j)| {
            self.cell(i, j).iter().zip(f).map(|(&w, &x)| w * x).sum()
        }))
    }

    /// Whether every cell equals the first one.
    pub fn is_constant(&self) -> bool {
        let first = self.cell(0, 0);
        (0..self.n).all(|i| (0..self.n).all(|j| self.cell(i, j) == first))
    }

    /// Lifts two graphons to the least common refinement of their grids.
    pub fn lift_to_common(a: &Self, b: &Self) -> Result<(Self, Self)> {
        if !same_space(&a.space, &b.space) {
            return Err(Error::SpaceMismatch);
        }
        let l = lcm(a.n, b.n);
        Ok((a.refine(l / a.n)?, b.refine(l / b.n)?))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// A permutation of `0..n`, applied as `i ↦ σ(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &x in &map {
            if x >= map.len() || std::mem::replace(&mut seen[x], true) {
                return Err(Error::InvalidArgument(format!("{map:?} is not a permutation")));
            }
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            inv[x] = i;
        }
        Self(inv)
    }

    pub(crate) fn swap(&mut self, a: usize, b: usize) {
        self.0.swap(a, b);
    }

    /// Advances to the next permutation in lexicographic order; returns
    /// `false` (leaving the slice sorted ascending) after the last one.
    pub(crate) fn next_lexicographic(&mut self) -> bool {
        let p = &mut self.0;
        let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
            p.reverse();
            return false;
        };
        let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
        p.swap(i - 1, j);
        p[i..].reverse();
        true
    }
}

/// A partition of `0..n` into nonempty disjoint groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition(Vec<Vec<usize>>);

impl Partition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::InvalidPartition("empty group".into()));
        }
        Ok(Self(groups))
    }

    pub fn singletons(n: usize) -> Self {
        Self((0..n).map(|i| vec![i]).collect())
    }

    /// `k` contiguous groups of size `n / k`.
    pub fn contiguous(n: usize, k: usize) -> Result<Self> {
        if k == 0 || n % k != 0 {
            return Err(Error::InvalidPartition(format!("{k} groups do not divide {n} blocks")));
        }
        let size = n / k;
        Ok(Self((0..k).map(|g| (g * size..(g + 1) * size).collect()).collect()))
    }

    /// Group index of each block (`labels[i]` is the group of block `i`);
    /// labels need not be contiguous.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut ids: Vec<usize> = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let groups = ids
            .iter()
            .map(|&id| (0..labels.len()).filter(|&i| labels[i] == id).collect())
            .collect();
        Self::new(groups)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_covers(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.0.iter().flatten() {
            if i >= n {
                return Err(Error::InvalidPartition(format!("block {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPartition(format!("block {i} appears twice")));
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidPartition(format!("block {i} is not covered")));
        }
        Ok(())
    }

    fn owner(&self, n: usize) -> Vec<usize> {
        let mut owner = vec![0; n];
        for (g, group) in self.0.iter().enumerate() {
            for &i in group {
                owner[i] = g;
            }
        }
        owner
    }
}

/// A simple weighted graph: symmetric matrix of point indices with the
/// distinguished point on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<T: Scalar> {
    n: usize,
    space: Arc<WeightSpace<T>>,
    weights: Vec<usize>,
}

impl<T: Scalar> WeightedGraph<T> {
    pub fn new(space: Arc<WeightSpace<T>>, n: usize, weights: Vec<usize>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: weights.len() });
        }
        for i in 0..n {
            if weights[i * n + i] != space.zero_index() {
                return Err(Error::InvalidGraphon(format!("vertex {i} has a self-loop weight")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if w >= space.len() {
                    return Err(Error::InvalidGraphon(format!("weight index {w} out of range")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::InvalidGraphon(format!("edge ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(Self { n, space, weights })
    }

    /// Builds a graph from the upper-triangle edge weights in row order
    /// `(0,1), (0,2), …, (n-2,n-1)`.
    pub fn from_upper(space: Arc<WeightSpace<T>>, n: usize, upper: &[usize]) -> Result<Self> {
        let edges = n * n.saturating_sub(1) / 2;
        if upper.len() != edges {
            return Err(Error::Dimension { expected: edges, got: upper.len() });
        }
        let mut weights = vec![space.zero_index(); n * n];
        let mut e = 0;
        for i in 0..n {
            for j in i + 1..n {
                let w = upper[e];
                if w >= space.len() {
                    return Err(Error::InvalidGraphon(format!("weight index {w} out of range")));
                }
                weights[i * n + j] = w;
                weights[j * n + i] = w;
                e += 1;
            }
        }
        Ok(Self { n, space, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn space(&self) -> &Arc<WeightSpace<T>> {
        &self.space
    }

    pub fn weight(&self, i: usize, j: usize) -> usize {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[usize] {
        &self.weights
    }

    /// Upper-triangle weights in row order.
    pub fn upper(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.weight(i, j));
            }
        }
        out
    }

    /// The step graphon with Dirac cells `δ_{m_ij}` (and `δ_0` on the
    /// diagonal).
    pub fn embed(&self) -> StepGraphon<T> {
        let k = self.space.len();
        let mut weights = vec![T::zero(); self.n * self.n * k];
        for (cell, &w) in self.weights.iter().enumerate() {
            weights[cell * k + w] = T::one();
        }
        StepGraphon::from_weights_unchecked(self.space.clone(), self.n, weights, true)
    }
}

/// Free-function form of [`WeightedGraph::embed`].
pub fn embed_graph<T: Scalar>(g: &WeightedGraph<T>) -> StepGraphon<T> {
    g.embed()
}
