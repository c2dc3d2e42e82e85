//! Relative entropy of a step graphon against a reference edge law, and its
//! variational (dual) representation over block-constant test kernels.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graphon::StepGraphon;
use crate::measure::{check_len, kl_weights, log_mgf_weights, same_space, FiniteMeasure, MeasureKind};
use crate::scalar::{pairwise_sum, Scalar};

/// Block-constant kernel assigning a real function on the weight space to
/// every block.
#[derive(Debug, Clone, PartialEq)]
pub struct DualKernel<T: Scalar> {
    n: usize,
    k: usize,
    values: Vec<T>,
    bound: T,
}

impl<T: Scalar> DualKernel<T> {
    /// `values` is row-major over blocks, then points: length `n·n·k`.
    pub fn new(n: usize, k: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * n * k {
            return Err(Error::Dimension { expected: n * n * k, got: values.len() });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("kernel entries must be finite".into()));
        }
        let bound = values.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        Ok(Self { n, k, values, bound })
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self { n, k, values: vec![T::zero(); n * n * k], bound: T::zero() }
    }

    /// The same function `f` on every block.
    pub fn constant(n: usize, f: &[T]) -> Result<Self> {
        Self::new(n, f.len(), f.repeat(n * n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.k
    }

    /// `sup |A|`.
    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &[T] {
        let at = (i * self.n + j) * self.k;
        &self.values[at..at + self.k]
    }

    pub(crate) fn check_shape<U: Scalar>(&self, w: &StepGraphon<U>) -> Result<()> {
        if self.n != w.n() {
            return Err(Error::Dimension { expected: w.n(), got: self.n });
        }
        if self.k != w.space().len() {
            return Err(Error::Dimension { expected: w.space().len(), got: self.k });
        }
        Ok(())
    }
}

fn check_reference<T: Scalar>(w: &StepGraphon<T>, nu: &FiniteMeasure<T>) -> Result<()> {
    if !same_space(w.space(), nu.space()) {
        return Err(Error::SpaceMismatch);
    }
    if nu.kind() != MeasureKind::Probability {
        return Err(Error::InvalidMeasure("reference measure must be a probability measure".into()));
    }
    Ok(())
}

/// Per-block relative entropies `H(cells[i][j] | ν)`.
pub fn entropy_per_cell<T: Scalar>(w: &StepGraphon<T>, nu: &FiniteMeasure<T>) -> Result<Array2<T>> {
    check_reference(w, nu)?;
    Ok(Array2::from_shape_fn((w.n(), w.n()), |(i, j)| kl_weights(w.cell(i, j), nu.weights())))
}

/// `H̃(W | ν) = (1/n²) Σ_{i,j} H(cells[i][j] | ν)`, `+∞` if any cell is not
/// absolutely continuous with respect to `ν`.
pub fn graphon_entropy<T: Scalar>(w: &StepGraphon<T>, nu: &FiniteMeasure<T>) -> Result<T> {
    let per_cell = entropy_per_cell(w, nu)?;
    let terms: Vec<T> = per_cell.iter().copied().collect();
    if terms.iter().any(|x| x.is_nan()) {
        return Err(Error::Numerical("NaN in cell entropy".into()));
    }
    if terms.iter().any(|x| x.is_infinite()) {
        return Ok(T::infinity());
    }
    let n2 = T::lit((w.n() * w.n()) as f64);
    Ok(pairwise_sum(&terms) / n2)
}

/// `J_{A,ν}(W) = (1/n²) Σ_{i,j} [⟨A_ij, W_ij⟩ − log Σ_z e^{A_ij(z)} ν(z)]`.
pub fn variational_value<T: Scalar>(w: &StepGraphon<T>, nu: &FiniteMeasure<T>, a: &DualKernel<T>) -> Result<T> {
    check_reference(w, nu)?;
    a.check_shape(w)?;
    let n = w.n();
    let mut terms = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let f = a.at(i, j);
            let pairing: T = w.cell(i, j).iter().zip(f).map(|(&p, &x)| p * x).sum();
            terms.push(pairing - log_mgf_weights(f, nu.weights()));
        }
    }
    Ok(pairwise_sum(&terms) / T::lit((n * n) as f64))
}

/// The maximizing kernel `A*(i,j;z) = log(W_ij(z)/ν(z)) − log(W_ij(0)/ν(0))`
/// for full-support `W` and `ν`.
pub fn optimal_kernel<T: Scalar>(w: &StepGraphon<T>, nu: &FiniteMeasure<T>) -> Result<DualKernel<T>> {
    check_reference(w, nu)?;
    let k = nu.space().len();
    let zero = nu.space().zero_index();
    for (z, &v) in nu.weights().iter().enumerate() {
        if v <= T::zero() {
            return Err(Error::Support { row: 0, col: 0, point: z, reason: "reference measure vanishes" });
        }
    }
    let n = w.n();
    let mut values = Vec::with_capacity(n * n * k);
    for i in 0..n {
        for j in 0..n {
            let cell = w.cell(i, j);
            if let Some(z) = cell.iter().position(|&p| p <= T::zero()) {
                return Err(Error::Support { row: i, col: j, point: z, reason: "cell vanishes" });
            }
            let base = (cell[zero] / nu.weights()[zero]).ln();
            values.extend(cell.iter().zip(nu.weights()).map(|(&p, &v)| (p / v).ln() - base));
        }
    }
    DualKernel::new(n, k, values)
}

/// `⟨f, ω⟩ − log_mgf(f, ν)` for a single measure; the per-cell term of
/// [`variational_value`].
pub fn legendre_term<T: Scalar>(omega: &FiniteMeasure<T>, nu: &FiniteMeasure<T>, f: &[T]) -> Result<T> {
    check_len(f, nu.space().len())?;
    Ok(omega.integrate(f)? - log_mgf_weights(f, nu.weights()))
}
