//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs without the libtest harness so the lines always print.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphon_ldp::sampling::MonteCarloConfig;
use graphon_ldp::{
    concentration_experiment, d_cut, delta_cut, graphon_entropy, kl_product, lp_distance, minimize_rate, optimal_kernel,
    variational_value, verify_ldp, ConstraintSet, CutConfig, CutMode, DensityGraphon, DensityMeasure, Direction, DualKernel,
    EventSpec, FiniteMeasure, Graphon, LdpMethod, NestedPartitionScheme, Partition, Permutation, PermutationSearch, Point,
    StepGraphon, WeightSpace,
};

use common::*;

const KL_IDENTITY_TOL: f64 = 1e-10;
const GAP_LIMIT: f64 = 0.015;
const BINOMIAL_ORACLE_TOL: f64 = 1e-9;
const LP_TOL: f64 = 1e-9;
const VARIATIONAL_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const PROJECTION_TOL: f64 = 1e-12;
const LIMIT_TOL: f64 = 1e-4;
const TRIANGLE_TOL: f64 = 1e-9;
const DUALITY_TOL: f64 = 1e-8;
const GRID_TOL: f64 = 2e-3;

/// `H(Bern(0.5) | Bern(0.3)) = 0.5 ln(5/3) + 0.5 ln(5/7)`.
fn bernoulli_rate() -> f64 {
    0.5 * (0.5f64 / 0.3).ln() + 0.5 * (0.5f64 / 0.7).ln()
}

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for (k, n) in [(2usize, 4usize), (3, 3)] {
        let space = Arc::new(WeightSpace::discrete_range(k).unwrap());
        for rep in 0..10 {
            let nu = random_measure(&mut rng, &space);
            let mut w = random_graphon(&mut rng, &space, n);
            if rep % 2 == 1 {
                // Cells with zeros are absolutely continuous too.
                let kk = space.len();
                let mut weights = w.weights().to_vec();
                for i in 0..n {
                    for j in i..n {
                        let cell = sparse_weights(&mut rng, kk);
                        weights[(i * n + j) * kk..(i * n + j + 1) * kk].copy_from_slice(&cell);
                        weights[(j * n + i) * kk..(j * n + i + 1) * kk].copy_from_slice(&cell);
                    }
                }
                w = StepGraphon::from_weights(space.clone(), n, weights, true).unwrap();
            }
            let oracle = kl_by_enumeration(&|i, j| w.cell(i, j).to_vec(), nu.weights(), n);
            let got = kl_product(&w, &nu).map_err(|e| e.to_string())?.sum;
            worst = worst.max((got - oracle).abs());
        }
    }
    check(worst <= KL_IDENTITY_TOL, format!("max |kl_product - enumeration| = {worst:.3e}"))?;
    Ok(format!("max |kl_product - enumeration| = {worst:.3e} over 20 graphons"))
}

fn criterion_2() -> Outcome {
    let space = Arc::new(WeightSpace::binary());
    let nu = FiniteMeasure::bernoulli(space, 0.3).unwrap();
    let event = EventSpec::mean(vec![0.0, 1.0], Direction::AtLeast, 0.5).unwrap();
    let n_list = [10, 20, 40, 80];
    let report = verify_ldp(&nu, &event, &n_list, LdpMethod::Exact, &MonteCarloConfig::default()).map_err(|e| e.to_string())?;
    let rate = bernoulli_rate();
    check((report.rate_target - rate).abs() <= BINOMIAL_ORACLE_TOL, format!("rate_target {} vs {rate}", report.rate_target))?;
    for row in &report.rows {
        let edges = (row.n * (row.n - 1) / 2) as u64;
        let oracle = binomial_tail_ln(edges, 3, 10, edges.div_ceil(2));
        let rel = (row.log_prob - oracle).abs() / oracle.abs();
        check(rel <= BINOMIAL_ORACLE_TOL, format!("n = {}: log P {} vs exact {oracle}", row.n, row.log_prob))?;
    }
    let gaps: Vec<f64> = report.rows.iter().map(|r| r.gap).collect();
    let (first, last) = (gaps[0].abs(), gaps[3].abs());
    check(last < first && last <= GAP_LIMIT, format!("gaps {gaps:?}"))?;
    Ok(format!("rate {:.7}, gaps {}", report.rate_target, gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(" ")))
}

fn random_metric(rng: &mut ChaCha8Rng, k: usize) -> Space {
    if rng.gen_bool(0.5) {
        return random_line(rng, k);
    }
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let x = (rng.gen_range(1..=8) as f64) * 0.125;
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                d[i][j] = f64::min(d[i][j], d[i][m] + d[m][j]);
            }
        }
    }
    Arc::new(WeightSpace::with_matrix((0..k).map(|i| Point::Real(i as f64)).collect(), d, 0).unwrap())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for k in 2..=6 {
        for _ in 0..200 {
            let space = random_metric(&mut rng, k);
            let a = FiniteMeasure::probability(space.clone(), sparse_weights(&mut rng, k)).unwrap();
            let b = FiniteMeasure::probability(space.clone(), sparse_weights(&mut rng, k)).unwrap();
            let c = FiniteMeasure::probability(space.clone(), sparse_weights(&mut rng, k)).unwrap();
            let dist = space.dist_matrix();
            let ab = lp_distance(&a, &b).map_err(|e| e.to_string())?;
            worst = worst.max((ab - lp_brute(a.weights(), b.weights(), &dist)).abs());
            let (ba, bc, ac) = (lp_distance(&b, &a).unwrap(), lp_distance(&b, &c).unwrap(), lp_distance(&a, &c).unwrap());
            check(lp_distance(&a, &a).unwrap() == 0.0, "d(a, a) is not zero".into())?;
            check(ab == ba, format!("asymmetric: {ab} vs {ba}"))?;
            check(ac <= ab + bc + LP_TOL, format!("triangle: {ac} > {ab} + {bc}"))?;
            check(a == b || ab > 0.0, "distinct measures at distance zero".into())?;
        }
    }
    check(worst <= LP_TOL, format!("max |lp - brute force| = {worst:.3e}"))?;
    Ok(format!("max |lp - brute force| = {worst:.3e} over 1000 pairs, axioms hold"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst_eq, mut worst_excess) = (0.0f64, f64::NEG_INFINITY);
    for case in 0..100 {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(2..=4);
        let space = Arc::new(WeightSpace::discrete_range(k).unwrap());
        let nu = random_measure(&mut rng, &space);
        let w = random_graphon(&mut rng, &space, n);
        let h = graphon_entropy(&w, &nu).unwrap();
        let star = variational_value(&w, &nu, &optimal_kernel(&w, &nu).unwrap()).unwrap();
        worst_eq = worst_eq.max((star - h).abs());
        for _ in 0..10 {
            let scale = [0.1, 1.0, 5.0][case % 3];
            let values = (0..n * n * k).map(|_| rng.gen_range(-scale..scale)).collect();
            let a = DualKernel::new(n, k, values).unwrap();
            worst_excess = worst_excess.max(variational_value(&w, &nu, &a).unwrap() - h);
        }
    }
    check(worst_eq <= VARIATIONAL_TOL, format!("max |J* - H| = {worst_eq:.3e}"))?;
    check(worst_excess <= VARIATIONAL_TOL, format!("a random kernel exceeds H by {worst_excess:.3e}"))?;
    Ok(format!("max |J* - H| = {worst_eq:.3e}; 1000 kernels, max J - H = {worst_excess:.3e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(2..=4);
        let space = Arc::new(WeightSpace::discrete_range(k).unwrap());
        let nu = random_measure(&mut rng, &space);
        let w = random_graphon(&mut rng, &space, n);
        let groups = rng.gen_range(1..=n);
        let mut labels: Vec<usize> = (0..n).map(|i| if i < groups { i } else { rng.gen_range(0..groups) }).collect();
        labels = random_permutation(&mut rng, n).into_iter().map(|p| labels[p]).collect();
        let stepped = w.step(&Partition::from_labels(&labels).unwrap()).unwrap();
        worst = worst.max(graphon_entropy(&stepped, &nu).unwrap() - graphon_entropy(&w, &nu).unwrap());
    }
    check(worst <= STEP_TOL, format!("stepping raised entropy by {worst:.3e}"))?;
    for _ in 0..20 {
        let space = Arc::new(WeightSpace::discrete_range(3).unwrap());
        let nu = random_measure(&mut rng, &space);
        let w = random_graphon(&mut rng, &space, 16);
        let seq: Vec<f64> = [1, 2, 4, 8, 16].iter().map(|&m| graphon_entropy(&w.approximant(m).unwrap(), &nu).unwrap()).collect();
        check(seq.windows(2).all(|p| p[1] >= p[0] - STEP_TOL), format!("dyadic sequence not monotone: {seq:?}"))?;
        check(w.approximant(16).unwrap() == w, "full-resolution approximant differs".into())?;
        check(seq[4] == graphon_entropy(&w, &nu).unwrap(), "full-resolution entropy differs".into())?;
    }
    Ok(format!("max H(step) - H = {worst:.3e} over 100 pairs; 20 dyadic sequences monotone and exact"))
}

fn random_density(rng: &mut ChaCha8Rng) -> DensityMeasure {
    let pieces = rng.gen_range(1..=5);
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let breakpoints: Vec<f64> = std::iter::once(0.0).chain(cuts).chain(std::iter::once(1.0)).collect();
    if rng.gen_bool(0.5) {
        let values: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.1..2.0)).collect();
        let mass: f64 = values.iter().zip(breakpoints.windows(2)).map(|(v, b)| v * (b[1] - b[0])).sum();
        DensityMeasure::piecewise_constant(breakpoints, values.iter().map(|v| v / mass).collect()).unwrap()
    } else {
        let values: Vec<f64> = (0..=pieces).map(|_| rng.gen_range(0.1..2.0)).collect();
        let mass: f64 = breakpoints.windows(2).zip(values.windows(2)).map(|(b, v)| 0.5 * (v[0] + v[1]) * (b[1] - b[0])).sum();
        DensityMeasure::piecewise_linear(breakpoints, values.iter().map(|v| v / mass).collect()).unwrap()
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let scheme = NestedPartitionScheme::<f64>::new(0.0, 1.0, 12).unwrap();
    for _ in 0..50 {
        let mu = random_density(&mut rng);
        let fine = rng.gen_range(2..=12);
        let coarse = rng.gen_range(1..fine);
        let direct = scheme.project_measure(&mu, coarse).unwrap();
        let via = scheme.project_between(&scheme.project_measure(&mu, fine).unwrap(), coarse).unwrap();
        check(direct == via, format!("composition {fine} -> {coarse} is not exact"))?;
    }
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = rng.gen_range(1..=2);
        let mut cells = vec![None; n * n];
        for i in 0..n {
            for j in i..n {
                let d = random_density(&mut rng);
                cells[i * n + j] = Some(d.clone());
                cells[j * n + i] = Some(d);
            }
        }
        let w = DensityGraphon::new(n, cells.into_iter().map(Option::unwrap).collect(), true).unwrap();
        let nu = random_density(&mut rng);
        let rates = scheme.rate_by_projections(&w, &nu, 10).unwrap();
        worst = worst.max(rates.windows(2).map(|p| p[0] - p[1]).fold(f64::NEG_INFINITY, f64::max));
    }
    check(worst <= PROJECTION_TOL, format!("projected rates decrease by {worst:.3e}"))?;
    let lin = DensityGraphon::constant(DensityMeasure::piecewise_linear(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap(), 1).unwrap();
    let rates = scheme.rate_by_projections(&lin, &DensityMeasure::uniform(0.0, 1.0).unwrap(), 12).unwrap();
    let limit = std::f64::consts::LN_2 - 0.5;
    let err = (rates[11] - limit).abs();
    check(err <= LIMIT_TOL, format!("rate at m = 12 is {} vs {limit}", rates[11]))?;
    Ok(format!("composition exact (50), max decrease {worst:.3e} (50), |rate_12 - (ln 2 - 1/2)| = {err:.3e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cfg = CutConfig::default();
    for n in 1..=5 {
        for _ in 0..20 {
            let k = rng.gen_range(2..=3);
            let space = Arc::new(WeightSpace::discrete_range(k).unwrap());
            let w = random_graphon(&mut rng, &space, n);
            let sigma = Permutation::new(random_permutation(&mut rng, n)).unwrap();
            let r = delta_cut(&w, &w.relabel(&sigma).unwrap(), PermutationSearch::Exact, &cfg).map_err(|e| e.to_string())?;
            check(r.value == 0.0 && r.mode == CutMode::Exact, format!("n = {n}: delta = {} ({:?})", r.value, r.mode))?;
        }
    }
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = rng.gen_range(2..=5);
        let space = Arc::new(WeightSpace::discrete_range(rng.gen_range(2..=3)).unwrap());
        let [u, v, w] = [0, 1, 2].map(|_| random_graphon(&mut rng, &space, n));
        let d = |a: &Graphon, b: &Graphon| delta_cut(a, b, PermutationSearch::Exact, &cfg).unwrap().value;
        worst = worst.max(d(&u, &w) - d(&u, &v) - d(&v, &w));
        check(d(&u, &v) <= d_cut(&u, &v, &cfg).unwrap().value + TRIANGLE_TOL, "delta exceeds labeled distance".into())?;
    }
    check(worst <= TRIANGLE_TOL, format!("triangle violated by {worst:.3e}"))?;
    Ok(format!("100 relabelings at exactly 0; triangle slack {worst:.3e} over 50 triples"))
}

fn criterion_8() -> Outcome {
    let space = Arc::new(WeightSpace::binary());
    let nu = FiniteMeasure::bernoulli(space.clone(), 0.3).unwrap();
    let event = EventSpec::mean(vec![0.0, 1.0], Direction::AtLeast, 0.5).unwrap();
    let (target, rows) = concentration_experiment(&nu, &event, &[16, 32, 64], 50, 8, &CutConfig::default()).map_err(|e| e.to_string())?;
    let expected = StepGraphon::constant(&FiniteMeasure::bernoulli(space, 0.5).unwrap(), 1).unwrap();
    let off = target.weights().iter().zip(expected.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(target.n() == 1 && off <= 1e-12, format!("minimizer is not Bernoulli(0.5): {:?}", target.weights()))?;
    let medians: Vec<f64> = rows.iter().map(|r| median(&r.deltas)).collect();
    for (r, m) in rows.iter().zip(&medians) {
        check(r.deltas.len() == 50, "wrong replicate count".into())?;
        check((r.median_delta - m).abs() <= 1e-15, format!("reported median {} vs {m}", r.median_delta))?;
    }
    check(medians.windows(2).all(|p| p[1] < p[0]), format!("medians {medians:?}"))?;
    Ok(format!("medians {}", medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" > ")))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut worst_dual, mut worst_grid) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let k = 2 + case % 2;
        let nu = random_weights(&mut rng, k);
        let f: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let mean: f64 = nu.iter().zip(&f).map(|(a, b)| a * b).sum();
        let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let u = rng.gen_range(0.1..0.6);
        let (direction, t, sign) = if case % 4 < 2 {
            (Direction::AtLeast, mean + u * (hi - mean), 1.0)
        } else {
            (Direction::AtMost, mean - u * (mean - lo), -1.0)
        };
        let measure = FiniteMeasure::probability(Arc::new(WeightSpace::discrete_range(k).unwrap()), nu.clone()).unwrap();
        let r = minimize_rate(&measure, &ConstraintSet::single(f.clone(), direction, t)).map_err(|e| e.to_string())?;
        worst_dual = worst_dual.max((r.value - legendre_value(&f, &nu, t, sign)).abs());
        worst_grid = worst_grid.max((r.value - constant_grid_minimum(&f, &nu, t, sign, 1000)).abs());
    }
    check(worst_dual <= DUALITY_TOL, format!("max |value - Legendre| = {worst_dual:.3e}"))?;
    check(worst_grid <= GRID_TOL, format!("max |value - grid| = {worst_grid:.3e}"))?;
    Ok(format!("max |value - Legendre| = {worst_dual:.3e}, max |value - grid| = {worst_grid:.3e}"))
}

fn main() -> ExitCode {
    let table: [(u32, &str, Option<Duration>, fn() -> Outcome); 9] = [
        (1, "edge-product relative entropy identity", Some(Duration::from_secs(1)), criterion_1),
        (2, "edge-density rate against exact binomial tails", Some(Duration::from_secs(10)), criterion_2),
        (3, "Lévy–Prokhorov against all-subsets brute force", Some(Duration::from_secs(30)), criterion_3),
        (4, "variational equality", None, criterion_4),
        (5, "entropy monotone under stepping", None, criterion_5),
        (6, "projection laws", Some(Duration::from_secs(5)), criterion_6),
        (7, "weak isomorphism and triangle inequality", None, criterion_7),
        (8, "conditional concentration", Some(Duration::from_secs(120)), criterion_8),
        (9, "minimizer duality", None, criterion_9),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in table {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome = Err(format!("took {elapsed:.2?}, budget {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
