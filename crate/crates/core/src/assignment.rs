//! Minimum-cost linear assignment (Hungarian method with potentials).

use crate::scalar::Scalar;

/// Returns `assign` with `assign[row] = column`, minimizing
/// `Σ cost[row][assign[row]]` over a square cost matrix given row-major.
pub fn min_cost_assignment<T: Scalar>(cost: &[T], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    let inf = T::infinity();
    // 1-based arrays; column 0 is a virtual start column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[(r0 - 1) * n + (col - 1)] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] = u[matched_row[col]] + delta;
                    v[col] = v[col] - delta;
                } else {
                    minv[col] = minv[col] - delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for col in 1..=n {
        assign[matched_row[col] - 1] = col - 1;
    }
    assign
}
