//! Exact Lévy–Prokhorov distance on a finite metric space.
//!
//! For a distance threshold `r`, the worst subset gap
//! `max_U [η1(U) − η2(N_r(U))]` (with `N_r(U)` the closed `r`-neighbourhood)
//! equals `η1(Z)` minus the maximum flow of the transportation network that
//! may move `η1`-mass to `η2`-mass over pairs at distance `≤ r`. The gap only
//! changes at the finitely many pairwise distances, so the distance is the
//! first threshold interval on which the gap drops below the next distance.
//!
//! Neighbourhoods in the definition use a strict `d < ε`; the returned value
//! is the infimum of the feasible `ε`, and [`lp_feasible`] reports membership
//! in the closure of the feasible set (feasible for every larger `ε`).

use crate::error::{Error, Result};
use crate::measure::{FiniteMeasure, MeasureKind, WeightSpace};
use crate::scalar::Scalar;

/// Sorted distinct pairwise distances and the rank of each pair in that list.
pub(crate) struct LpIndex<T> {
    thresholds: Vec<T>,
    rank: Vec<u32>,
    k: usize,
}

impl<T: Scalar> LpIndex<T> {
    pub(crate) fn new(space: &WeightSpace<T>) -> Self {
        let k = space.len();
        let mut all: Vec<T> = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                all.push(space.dist(i, j));
            }
        }
        let mut thresholds = all.clone();
        thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        thresholds.dedup();
        let rank = all
            .iter()
            .map(|d| {
                thresholds
                    .binary_search_by(|t| t.partial_cmp(d).expect("finite distances"))
                    .expect("distance present") as u32
            })
            .collect();
        Self { thresholds, rank, k }
    }

    fn top(&self) -> usize {
        self.thresholds.len() - 1
    }

    #[inline]
    fn related(&self, i: usize, j: usize, level: usize) -> bool {
        self.rank[i * self.k + j] as usize <= level
    }

    /// Largest threshold level whose distance is `≤ eps`.
    fn level_at(&self, eps: T) -> usize {
        self.thresholds.partition_point(|&t| t <= eps) - 1
    }
}

/// Mass of `a` that cannot be transported onto `b` within threshold `level`.
fn directed_gap<T: Scalar>(idx: &LpIndex<T>, a: &[T], b: &[T], level: usize) -> T {
    let mass_a: T = a.iter().copied().sum();
    let flow = if level == 0 {
        a.iter().zip(b).map(|(&x, &y)| x.min(y)).sum()
    } else if level == idx.top() {
        mass_a.min(b.iter().copied().sum())
    } else {
        bipartite_max_flow(a, b, |i, j| idx.related(i, j, level))
    };
    (mass_a - flow).max(T::zero())
}

fn gap_at<T: Scalar>(idx: &LpIndex<T>, a: &[T], b: &[T], level: usize) -> T {
    directed_gap(idx, a, b, level).max(directed_gap(idx, b, a, level))
}

pub(crate) fn lp_distance_weights<T: Scalar>(space: &WeightSpace<T>, a: &[T], b: &[T]) -> T {
    let idx = space.lp_index();
    let top = idx.top();
    let next = |q: usize| if q < top { idx.thresholds[q + 1] } else { T::infinity() };
    // gap is nonincreasing in the level and thresholds increase, so the
    // predicate gap(q) <= d_{q+1} is monotone; find its first true level.
    let (mut lo, mut hi) = (0usize, top);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if gap_at(idx, a, b, mid) <= next(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    gap_at(idx, a, b, lo).max(idx.thresholds[lo])
}

fn check_pair<T: Scalar>(a: &FiniteMeasure<T>, b: &FiniteMeasure<T>) -> Result<()> {
    if !a.same_space_as(b) {
        return Err(Error::SpaceMismatch);
    }
    for m in [a, b] {
        if m.kind() == MeasureKind::SignedForbidden {
            return Err(Error::InvalidMeasure("signed measure".into()));
        }
    }
    Ok(())
}

/// Lévy–Prokhorov distance between two (sub)probability measures.
pub fn lp_distance<T: Scalar>(a: &FiniteMeasure<T>, b: &FiniteMeasure<T>) -> Result<T> {
    check_pair(a, b)?;
    Ok(lp_distance_weights(a.space(), a.weights(), b.weights()))
}

/// Whether `eps` is in the closure of the Lévy–Prokhorov feasible set,
/// i.e. whether `lp_distance(a, b) <= eps`.
pub fn lp_feasible<T: Scalar>(a: &FiniteMeasure<T>, b: &FiniteMeasure<T>, eps: T) -> Result<bool> {
    check_pair(a, b)?;
    if eps.is_nan() || eps < T::zero() {
        return Err(Error::InvalidArgument(format!("epsilon must be nonnegative, got {eps}")));
    }
    let idx = a.space().lp_index();
    let level = idx.level_at(eps);
    Ok(gap_at(idx, a.weights(), b.weights(), level) <= eps + T::mass_tol())
}

struct Edge<T> {
    to: usize,
    cap: T,
    rev: usize,
}

struct FlowNet<T> {
    adj: Vec<Vec<Edge<T>>>,
    level: Vec<i32>,
    iter: Vec<usize>,
    eps: T,
}

impl<T: Scalar> FlowNet<T> {
    fn new(nodes: usize, eps: T) -> Self {
        Self { adj: (0..nodes).map(|_| Vec::new()).collect(), level: vec![0; nodes], iter: vec![0; nodes], eps }
    }

    fn add(&mut self, u: usize, v: usize, cap: T) {
        let ru = self.adj[v].len();
        let rv = self.adj[u].len();
        self.adj[u].push(Edge { to: v, cap, rev: ru });
        self.adj[v].push(Edge { to: u, cap: T::zero(), rev: rv });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in &self.adj[u] {
                if e.cap > self.eps && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: T) -> T {
        if u == t {
            return pushed;
        }
        while self.iter[u] < self.adj[u].len() {
            let i = self.iter[u];
            let (to, cap) = (self.adj[u][i].to, self.adj[u][i].cap);
            if cap > self.eps && self.level[to] == self.level[u] + 1 {
                let got = self.dfs(to, t, pushed.min(cap));
                if got > T::zero() {
                    let rev = self.adj[u][i].rev;
                    self.adj[u][i].cap = self.adj[u][i].cap - got;
                    self.adj[to][rev].cap = self.adj[to][rev].cap + got;
                    return got;
                }
            }
            self.iter[u] += 1;
        }
        T::zero()
    }

    fn max_flow(&mut self, s: usize, t: usize) -> T {
        let mut flow = T::zero();
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|x| *x = 0);
            loop {
                let f = self.dfs(s, t, T::infinity());
                if f <= T::zero() {
                    break;
                }
                flow = flow + f;
            }
        }
        flow
    }
}

/// Maximum flow from supplies `a` to demands `b` over the allowed pairs.
pub(crate) fn bipartite_max_flow<T: Scalar>(a: &[T], b: &[T], allowed: impl Fn(usize, usize) -> bool) -> T {
    let left: Vec<usize> = (0..a.len()).filter(|&i| a[i] > T::zero()).collect();
    let right: Vec<usize> = (0..b.len()).filter(|&j| b[j] > T::zero()).collect();
    if left.is_empty() || right.is_empty() {
        return T::zero();
    }
    let s = 0;
    let t = 1 + left.len() + right.len();
    let scale: T = a.iter().copied().sum::<T>() + b.iter().copied().sum::<T>();
    let mut net = FlowNet::new(t + 1, scale * T::epsilon());
    for (li, &i) in left.iter().enumerate() {
        net.add(s, 1 + li, a[i]);
        for (rj, &j) in right.iter().enumerate() {
            if allowed(i, j) {
                net.add(1 + li, 1 + left.len() + rj, T::infinity());
            }
        }
    }
    for (rj, &j) in right.iter().enumerate() {
        net.add(1 + left.len() + rj, t, b[j]);
    }
    net.max_flow(s, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Point;
    use std::sync::Arc;

    fn line(xs: &[f64]) -> Arc<WeightSpace<f64>> {
        Arc::new(WeightSpace::real_line(xs).unwrap())
    }

    #[test]
    fn identical_is_zero() {
        let s = line(&[0.0, 0.3, 1.0]);
        let m = FiniteMeasure::probability(s, vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(lp_distance(&m, &m).unwrap(), 0.0);
        assert!(lp_feasible(&m, &m, 0.0).unwrap());
    }

    #[test]
    fn diracs_at_distance() {
        let s = line(&[0.0, 0.4]);
        let x = FiniteMeasure::dirac(s.clone(), 0).unwrap();
        let y = FiniteMeasure::dirac(s, 1).unwrap();
        assert!((lp_distance(&x, &y).unwrap() - 0.4f64).abs() < 1e-15);
        assert!(!lp_feasible(&x, &y, 0.3).unwrap());
        assert!(lp_feasible(&x, &y, 0.5).unwrap());
    }

    #[test]
    fn bernoulli_pair() {
        let s = Arc::new(WeightSpace::binary());
        let a = FiniteMeasure::bernoulli(s.clone(), 0.7).unwrap();
        let b = FiniteMeasure::bernoulli(s, 0.3).unwrap();
        assert!((lp_distance(&a, &b).unwrap() - 0.4f64).abs() < 1e-15);
    }

    #[test]
    fn far_diracs_cap_at_one() {
        let s = line(&[0.0, 5.0]);
        let x = FiniteMeasure::dirac(s.clone(), 0).unwrap();
        let y = FiniteMeasure::dirac(s, 1).unwrap();
        assert_eq!(lp_distance(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn unequal_masses() {
        let s = Arc::new(WeightSpace::binary());
        let a = FiniteMeasure::subprobability(s.clone(), vec![0.25, 0.25]).unwrap();
        let z = FiniteMeasure::subprobability(s, vec![0.0, 0.0]).unwrap();
        assert!((lp_distance(&a, &z).unwrap() - 0.5f64).abs() < 1e-15);
    }

    #[test]
    fn flow_matches_greedy_on_chain() {
        // supplies can only move to the neighbour on the right
        let a = [0.5, 0.5, 0.0];
        let b = [0.0, 0.3, 0.7];
        let f = bipartite_max_flow(&a, &b, |i, j| j == i + 1);
        assert!((f - 0.8f64).abs() < 1e-15);
    }

    #[test]
    fn labelled_points_with_matrix() {
        let pts = vec![Point::Label("zero".into()), Point::Label("a".into()), Point::Label("b".into())];
        let d = vec![vec![0.0, 0.2, 0.5], vec![0.2, 0.0, 0.4], vec![0.5, 0.4, 0.0]];
        let s = Arc::new(WeightSpace::with_matrix(pts, d, 0).unwrap());
        let x = FiniteMeasure::dirac(s.clone(), 1).unwrap();
        let y = FiniteMeasure::dirac(s, 2).unwrap();
        assert!((lp_distance(&x, &y).unwrap() - 0.4f64).abs() < 1e-15);
    }
}
