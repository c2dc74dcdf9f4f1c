use ndarray::{Array2, ArrayView2};

use super::linalg::sq_dist;
use super::{check_k, relabel_by_first_appearance, ClusterAssignment, ClusterError};
use crate::Scalar;

/// Agglomerative clustering with Ward linkage, cut at `k` clusters.
///
/// Merge costs are the Ward variance increase
/// `n_i n_j / (n_i + n_j) · ||c_i − c_j||²`, maintained with the
/// Lance–Williams recurrence. A merged cluster keeps the lower slot index and
/// equal costs go to the lexicographically smallest slot pair. Labels are
/// numbered by first appearance in row order.
pub fn ahc_ward<F: Scalar>(x: ArrayView2<F>, k: usize) -> Result<ClusterAssignment<F>, ClusterError> {
    let n = x.nrows();
    check_k(k, n)?;
    let mut cost = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let c = sq_dist(x.row(i), x.row(j)) / F::of(2.0);
            cost[[i, j]] = c;
            cost[[j, i]] = c;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut slot: Vec<usize> = (0..n).collect();
    for _ in 0..n - k {
        let mut best: Option<(usize, usize, F)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && best.is_none_or(|(_, _, b)| cost[[i, j]] < b) {
                    best = Some((i, j, cost[[i, j]]));
                }
            }
        }
        let (i, j, dij) = best.expect("at least two active clusters");
        let (ni, nj) = (F::of_usize(size[i]), F::of_usize(size[j]));
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let nm = F::of_usize(size[m]);
            let updated = ((ni + nm) * cost[[m, i]] + (nj + nm) * cost[[m, j]] - nm * dij) / (ni + nj + nm);
            cost[[m, i]] = updated;
            cost[[i, m]] = updated;
        }
        size[i] += size[j];
        active[j] = false;
        for s in slot.iter_mut() {
            if *s == j {
                *s = i;
            }
        }
    }
    let labels = relabel_by_first_appearance(&slot);
    let centroids = super::centroids_of(x, &labels, k);
    Ok(ClusterAssignment {
        labels,
        k,
        centroids: Some(centroids),
        memberships: None,
        inertia: None,
    })
}
