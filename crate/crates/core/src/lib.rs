//! Probability graphons over a finite weight alphabet.
//!
//! The crate covers block-constant probability graphons and the tools needed
//! to study large deviations of weighted random graphs around them:
//!
//! - [`measure`] and [`lp`]: finite weight spaces, relative entropy,
//!   log-moment-generating functions, exponential tilting and the exact
//!   Lévy–Prokhorov distance;
//! - [`graphon`]: step graphons, graph embedding, stepping and relabeling;
//! - [`cut`]: labeled and unlabeled cut distances and the overlay functional;
//! - [`entropy`]: the graphon rate function and its dual representation;
//! - [`discretization`]: dyadic projections of interval-valued weights;
//! - [`rate`]: minimizing the rate under linear mean constraints;
//! - [`sampling`]: random graphs, exact tail probabilities and the
//!   large-deviation and concentration harnesses;
//! - [`io`] and [`selftest`]: file formats and the bundled checks.
//!
//! All numerics are generic over [`Scalar`] (`f64` or `f32`); the aliases
//! below fix `f64`, which is what the samplers and the command-line tool use.

pub mod assignment;
pub mod cut;
pub mod discretization;
pub mod entropy;
pub mod error;
pub mod graphon;
pub mod io;
pub mod lp;
pub mod measure;
pub mod rate;
pub mod sampling;
pub mod scalar;
pub mod selftest;

pub use cut::{delta_cut, d_cut, overlay, CutConfig, CutMode, CutResult, CutWitness, PermutationSearch};
pub use discretization::{closed_form_entropy, DensityGraphon, DensityMeasure, Interpolation, NestedPartitionScheme, SchemeConfig};
pub use entropy::{graphon_entropy, optimal_kernel, variational_value, DualKernel};
pub use error::{Error, Result};
pub use graphon::{embed_graph, Partition, Permutation, StepGraphon, WeightedGraph};
pub use lp::{lp_distance, lp_feasible};
pub use measure::{kl_divergence, log_mgf, tilt, tilt_to_mean, FiniteMeasure, MeasureKind, Metric, Point, WeightSpace};
pub use rate::{kkt_check, minimize_rate, Constraint, ConstraintSet, Direction, MinimizerResult, Scope, SolveMethod};
pub use sampling::{
    concentration_experiment, conditional_sample, event_log_prob_exact, kl_product, sample_from_graphon, sample_graph,
    verify_ldp, EventSpec, KlProduct, LdpMethod, LdpReport, LdpRow,
};
pub use scalar::Scalar;

pub type Space = WeightSpace<f64>;
pub type Measure = FiniteMeasure<f64>;
pub type Graphon = StepGraphon<f64>;
pub type Graph = WeightedGraph<f64>;
pub type Kernel = DualKernel<f64>;
