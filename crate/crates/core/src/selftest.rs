//! A fast bundled invariant suite, one or more checks per module, run by the
//! `selftest` subcommand.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cut::{d_cut, delta_cut, CutConfig, PermutationSearch};
use crate::discretization::{DensityGraphon, DensityMeasure, NestedPartitionScheme};
use crate::entropy::{graphon_entropy, optimal_kernel, variational_value};
use crate::error::{Error, Result};
use crate::graphon::{Partition, Permutation, StepGraphon};
use crate::io::{from_json, to_json, GraphonFile};
use crate::lp::lp_distance;
use crate::measure::{kl_divergence, tilt_to_mean, FiniteMeasure, WeightSpace};
use crate::rate::{minimize_rate, ConstraintSet, Direction};
use crate::sampling::{event_log_prob_exact, kl_product, sample_graph, EventSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Numerical(what()))
    }
}

fn close(a: f64, b: f64, tol: f64) -> Result<()> {
    ensure((a - b).abs() <= tol, || format!("{a} differs from {b} by more than {tol}"))
}

type Space = Arc<WeightSpace<f64>>;

fn random_measure(rng: &mut ChaCha8Rng, space: &Space) -> FiniteMeasure<f64> {
    let w: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
    FiniteMeasure::normalized(space.clone(), w).expect("positive weights")
}

fn random_graphon(rng: &mut ChaCha8Rng, space: &Space, n: usize) -> StepGraphon<f64> {
    let mut weights = vec![0.0; n * n * space.len()];
    let k = space.len();
    for i in 0..n {
        for j in i..n {
            let m = random_measure(rng, space);
            weights[(i * n + j) * k..(i * n + j + 1) * k].copy_from_slice(m.weights());
            weights[(j * n + i) * k..(j * n + i + 1) * k].copy_from_slice(m.weights());
        }
    }
    StepGraphon::from_weights(space.clone(), n, weights, true).expect("valid graphon")
}

const KL_05_03: f64 = 0.087_176_693_572_388_88;

fn measure_checks() -> Result<()> {
    let s = Arc::new(WeightSpace::binary());
    let b5 = FiniteMeasure::bernoulli(s.clone(), 0.5)?;
    let b3 = FiniteMeasure::bernoulli(s, 0.3)?;
    close(kl_divergence(&b5, &b3)?, KL_05_03, 1e-15)?;
    let (_, t) = tilt_to_mean(&b3, &[0.0, 1.0], 0.5)?;
    close(t.weights()[1], 0.5, 1e-12)
}

fn lp_checks() -> Result<()> {
    let s = Arc::new(WeightSpace::binary());
    let a = FiniteMeasure::bernoulli(s.clone(), 0.7)?;
    let b = FiniteMeasure::bernoulli(s, 0.3)?;
    close(lp_distance(&a, &b)?, 0.4, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = Arc::new(WeightSpace::real_line(&[0.0, 0.3, 1.0, 1.7])?);
    for _ in 0..20 {
        let (x, y, z) = (random_measure(&mut rng, &s), random_measure(&mut rng, &s), random_measure(&mut rng, &s));
        let (xy, yz, xz) = (lp_distance(&x, &y)?, lp_distance(&y, &z)?, lp_distance(&x, &z)?);
        ensure(xz <= xy + yz + 1e-9, || "triangle inequality".into())?;
        close(xy, lp_distance(&y, &x)?, 0.0)?;
    }
    Ok(())
}

fn graphon_checks() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = Arc::new(WeightSpace::discrete_range(3)?);
    let nu = random_measure(&mut rng, &s);
    let w = random_graphon(&mut rng, &s, 6);
    let stepped = w.step(&Partition::from_labels(&[0, 1, 0, 2, 1, 2])?)?;
    ensure(graphon_entropy(&stepped, &nu)? <= graphon_entropy(&w, &nu)? + 1e-12, || "stepping raised entropy".into())?;
    let sigma = Permutation::new(vec![3, 0, 5, 1, 4, 2])?;
    ensure(w.relabel(&sigma)?.relabel(&sigma.inverse())? == w, || "relabel round trip".into())
}

fn entropy_checks() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Arc::new(WeightSpace::discrete_range(3)?);
    let nu = random_measure(&mut rng, &s);
    let w = random_graphon(&mut rng, &s, 4);
    close(variational_value(&w, &nu, &optimal_kernel(&w, &nu)?)?, graphon_entropy(&w, &nu)?, 1e-10)
}

fn cut_checks() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = Arc::new(WeightSpace::binary());
    let w = random_graphon(&mut rng, &s, 4);
    let cfg = CutConfig::default();
    let moved = w.relabel(&Permutation::new(vec![2, 0, 3, 1])?)?;
    close(delta_cut(&w, &moved, PermutationSearch::Exact, &cfg)?.value, 0.0, 1e-12)?;
    let u = random_graphon(&mut rng, &s, 4);
    close(d_cut(&u, &w, &cfg)?.value, d_cut(&w, &u, &cfg)?.value, 1e-12)
}

fn discretization_checks() -> Result<()> {
    let scheme = NestedPartitionScheme::<f64>::new(0.0, 1.0, 10)?;
    let lin = DensityMeasure::piecewise_linear(vec![0.0, 1.0], vec![0.0, 2.0])?;
    let fine = scheme.project_measure(&lin, 8)?;
    ensure(scheme.project_between(&fine, 3)? == scheme.project_measure(&lin, 3)?, || "composition".into())?;
    let u = DensityMeasure::uniform(0.0, 1.0)?;
    let rates = scheme.rate_by_projections(&DensityGraphon::constant(lin, 1)?, &u, 10)?;
    ensure(rates.windows(2).all(|p| p[1] >= p[0] - 1e-12), || "rates not monotone".into())?;
    close(rates[9], std::f64::consts::LN_2 - 0.5, 1e-4)
}

fn sampling_checks() -> Result<()> {
    let s = Arc::new(WeightSpace::binary());
    let nu = FiniteMeasure::bernoulli(s.clone(), 0.3)?;
    let w = StepGraphon::constant(&FiniteMeasure::bernoulli(s, 0.5)?, 10)?;
    close(kl_product(&w, &nu)?.sum, 45.0 * KL_05_03, 1e-12)?;
    let ev = EventSpec::mean(vec![0.0, 1.0], Direction::AtLeast, 0.5)?;
    close(event_log_prob_exact(3, &nu, &ev)?, 0.216f64.ln(), 1e-14)?;
    ensure(sample_graph(12, &nu, 5)? == sample_graph(12, &nu, 5)?, || "sampler not deterministic".into())
}

fn rate_checks() -> Result<()> {
    let nu = FiniteMeasure::bernoulli(Arc::new(WeightSpace::binary()), 0.3)?;
    let r = minimize_rate(&nu, &ConstraintSet::single(vec![0.0, 1.0], Direction::AtLeast, 0.5))?;
    close(r.value, KL_05_03, 1e-12)?;
    ensure(r.kkt_residual <= 1e-8, || format!("kkt residual {}", r.kkt_residual))
}

fn io_checks() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = Arc::new(WeightSpace::discrete_range(3)?);
    let w = random_graphon(&mut rng, &s, 3);
    let back = from_json::<GraphonFile>(&to_json(&GraphonFile::of(&w))?)?.build()?;
    ensure(back == w, || "graphon JSON round trip is not bit-exact".into())
}

/// Runs every check; never panics.
pub fn run() -> Vec<Check> {
    let table: [(&'static str, &'static str, fn() -> Result<()>); 9] = [
        ("measure", "relative entropy and tilting", measure_checks),
        ("lp", "Lévy–Prokhorov values and axioms", lp_checks),
        ("graphon", "stepping and relabeling", graphon_checks),
        ("entropy", "variational equality", entropy_checks),
        ("cut", "relabel invariance and symmetry", cut_checks),
        ("discretization", "composition and monotone rates", discretization_checks),
        ("sampling", "edge-product entropy and exact tails", sampling_checks),
        ("rate", "closed-form minimizer", rate_checks),
        ("io", "bit-exact JSON", io_checks),
    ];
    table
        .into_iter()
        .map(|(module, name, f)| Check { module, name, outcome: f().map_err(|e| e.to_string()) })
        .collect()
}
