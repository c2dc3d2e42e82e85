//! Numeric scalar abstraction.
//!
//! Everything in the measure, graphon, cut, entropy, discretization and
//! rate-minimization layers is written against [`Scalar`], so the same code
//! runs in `f64` (the default used by the CLI and the samplers) or `f32`.
//! Tolerances scale with the type: the `f64` values are the ones the
//! numerical contracts are stated in.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute tolerance on probability-mass checks.
    const MASS_TOL: f64;
    /// Absolute tolerance on metric and entropy comparisons.
    const METRIC_TOL: f64;

    /// Converts an `f64` literal. Panics only if the type cannot hold finite
    /// `f64` values at all, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn mass_tol() -> Self {
        Self::lit(Self::MASS_TOL)
    }

    #[inline]
    fn metric_tol() -> Self {
        Self::lit(Self::METRIC_TOL)
    }
}

impl Scalar for f64 {
    const MASS_TOL: f64 = 1e-12;
    const METRIC_TOL: f64 = 1e-9;
}

impl Scalar for f32 {
    const MASS_TOL: f64 = 1e-5;
    const METRIC_TOL: f64 = 1e-4;
}

/// Log-sum-exp of `(log_weight, value)` style pairs already combined into
/// logs. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Scalar>(logs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = logs
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let s: T = logs.into_iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// Pairwise (tree) summation. The reduction order depends only on the
/// slice length, which keeps sums bit-stable no matter how the terms were
/// produced.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        len => {
            let mid = len / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}
