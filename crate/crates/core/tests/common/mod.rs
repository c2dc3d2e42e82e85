//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the solver paths it checks.

#![allow(dead_code)]

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use graphon_ldp::{FiniteMeasure, StepGraphon, WeightSpace};

pub type Space = Arc<WeightSpace<f64>>;

pub fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_measure(rng: &mut ChaCha8Rng, space: &Space) -> FiniteMeasure<f64> {
    FiniteMeasure::normalized(space.clone(), random_weights(rng, space.len())).unwrap()
}

/// Random probability vector that may have zero entries.
pub fn sparse_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..k).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() }).collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Symmetric step graphon with independent random cells.
pub fn random_graphon(rng: &mut ChaCha8Rng, space: &Space, n: usize) -> StepGraphon<f64> {
    let k = space.len();
    let mut weights = vec![0.0; n * n * k];
    for i in 0..n {
        for j in i..n {
            let cell = random_weights(rng, k);
            weights[(i * n + j) * k..(i * n + j + 1) * k].copy_from_slice(&cell);
            weights[(j * n + i) * k..(j * n + i + 1) * k].copy_from_slice(&cell);
        }
    }
    StepGraphon::from_weights(space.clone(), n, weights, true).unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.gen_range(0..=i));
    }
    p
}

/// Points on the real line, strictly increasing, containing 0.
pub fn random_line(rng: &mut ChaCha8Rng, k: usize) -> Space {
    let mut xs = vec![0.0];
    let mut x = 0.0;
    for _ in 1..k {
        x += rng.gen_range(0.1..1.5);
        xs.push(x);
    }
    Arc::new(WeightSpace::real_line(&xs).unwrap())
}

/// Plain relative entropy with `0 log 0 = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

/// Lévy–Prokhorov distance straight from the definition: the smallest `ε`
/// with `a(A) ≤ b(A^ε) + ε` and `b(A) ≤ a(A^ε) + ε` for every subset `A`,
/// where `A^ε` is the closed `ε`-neighbourhood.
pub fn lp_brute(a: &[f64], b: &[f64], dist: &[Vec<f64>]) -> f64 {
    let k = a.len();
    let mut radii: Vec<f64> = dist.iter().flatten().copied().collect();
    radii.push(0.0);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut worst: f64 = 0.0;
    for set in 1u32..(1 << k) {
        for (x, y) in [(a, b), (b, a)] {
            let mass_a: f64 = (0..k).filter(|&i| set >> i & 1 == 1).map(|i| x[i]).sum();
            // On [r_q, r_{q+1}) the neighbourhood is fixed; the least feasible
            // ε in that window is max(r_q, gap) if it stays below r_{q+1}.
            let mut best = f64::INFINITY;
            for (q, &r) in radii.iter().enumerate() {
                let covered: f64 = (0..k)
                    .filter(|&j| (0..k).any(|i| set >> i & 1 == 1 && dist[i][j] <= r))
                    .map(|j| y[j])
                    .sum();
                let cand = r.max(mass_a - covered);
                let upper = radii.get(q + 1).copied().unwrap_or(f64::INFINITY);
                if cand < upper {
                    best = best.min(cand);
                }
            }
            worst = worst.max(best);
        }
    }
    worst
}

/// Natural log of a big integer.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 900 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln P(Bin(edges, a/b) ≥ k)` in exact integer arithmetic.
pub fn binomial_tail_ln(edges: u64, a: u64, b: u64, k: u64) -> f64 {
    let (pa, pb) = (BigUint::from(a), BigUint::from(b - a));
    let mut choose = BigUint::one();
    let mut total = BigUint::zero();
    for j in 0..=edges {
        if j >= k {
            total += &choose * pa.pow(j as u32) * pb.pow((edges - j) as u32);
        }
        choose = choose * BigUint::from(edges - j) / BigUint::from(j + 1);
    }
    ln_big(&total) - edges as f64 * (b as f64).ln()
}

/// `KL(P_{n,W} ‖ μ_{n,ν})` by summing over every weighted graph on `n`
/// vertices.
pub fn kl_by_enumeration(cells: &dyn Fn(usize, usize) -> Vec<f64>, nu: &[f64], n: usize) -> f64 {
    let k = nu.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let laws: Vec<Vec<f64>> = pairs.iter().map(|&(i, j)| cells(i, j)).collect();
    let total = k.pow(pairs.len() as u32);
    let mut out = 0.0;
    for code in 0..total {
        let mut c = code;
        let (mut p, mut q) = (1.0, 1.0);
        for law in &laws {
            let z = c % k;
            c /= k;
            p *= law[z];
            q *= nu[z];
        }
        if p > 0.0 {
            out += p * (p / q).ln();
        }
    }
    out
}

fn log_mgf(f: &[f64], nu: &[f64], theta: f64) -> f64 {
    let m = f.iter().zip(nu).filter(|(_, &v)| v > 0.0).map(|(&x, _)| theta * x).fold(f64::NEG_INFINITY, f64::max);
    m + f.iter().zip(nu).map(|(&x, &v)| v * (theta * x - m).exp()).sum::<f64>().ln()
}

/// `sup_{s·θ ≥ 0} [θ t − log E_ν e^{θ f}]` by golden-section search, where
/// `s = +1` for a lower bound on the mean and `-1` for an upper bound.
pub fn legendre_value(f: &[f64], nu: &[f64], t: f64, sign: f64) -> f64 {
    let g = |theta: f64| theta * t - log_mgf(f, nu, theta);
    let mut hi = 1.0;
    while g(sign * 2.0 * hi) > g(sign * hi) && hi < 1e6 {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(sign * c) < g(sign * d) {
            a = c;
        } else {
            b = d;
        }
    }
    g(sign * 0.5 * (a + b)).max(0.0)
}

/// Minimum of `KL(ω ‖ ν)` over `ω` on the grid of step `1/steps` that meet
/// the mean constraint, for two or three points.
pub fn constant_grid_minimum(f: &[f64], nu: &[f64], t: f64, sign: f64, steps: usize) -> f64 {
    let feasible = |w: &[f64]| sign * (w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() - t) >= 0.0;
    let h = 1.0 / steps as f64;
    let mut best = f64::INFINITY;
    match nu.len() {
        2 => {
            for i in 0..=steps {
                let w = [1.0 - i as f64 * h, i as f64 * h];
                if feasible(&w) {
                    best = best.min(kl(&w, nu));
                }
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let w = [(steps - i - j) as f64 * h, i as f64 * h, j as f64 * h];
                    if feasible(&w) {
                        best = best.min(kl(&w, nu));
                    }
                }
            }
        }
        k => panic!("grid oracle supports two or three points, got {k}"),
    }
    best
}

/// Median of a sample (mean of the two middle values for even length).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}
