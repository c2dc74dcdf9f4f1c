use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{argmax, sq_dist};
use super::{check_k, ClusterAssignment, ClusterError};
use crate::rng::stream_rng;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzyParams {
    /// Fuzziness exponent, > 1.
    pub m: f64,
    /// Stop once no membership moves by this much in one iteration.
    pub error: f64,
    pub maxiter: usize,
    pub seed: u64,
}

impl Default for FuzzyParams {
    fn default() -> Self {
        Self {
            m: 2.0,
            error: 0.005,
            maxiter: 1000,
            seed: 0,
        }
    }
}

/// State after one alternating update, handed to observers.
pub struct FuzzyStep<'a, F> {
    pub iteration: usize,
    pub memberships: &'a Array2<F>,
    pub centroids: &'a Array2<F>,
    pub objective: F,
    pub max_change: F,
}

/// Memberships `u_ic = 1 / Σ_j (d_ic / d_ij)^(2/(m−1))`. A point sitting on
/// one or more centroids splits its membership evenly among them.
pub fn memberships_for<F: Scalar>(x: ArrayView2<F>, centroids: &Array2<F>, m: f64) -> Array2<F> {
    let k = centroids.nrows();
    let exponent = F::of(1.0 / (m - 1.0));
    let mut u = Array2::<F>::zeros((x.nrows(), k));
    let mut d2 = vec![F::zero(); k];
    for (i, row) in x.rows().into_iter().enumerate() {
        for (c, cent) in centroids.rows().into_iter().enumerate() {
            d2[c] = sq_dist(row, cent);
        }
        let zeros = d2.iter().filter(|&&d| d == F::zero()).count();
        if zeros > 0 {
            let share = F::one() / F::of_usize(zeros);
            for c in 0..k {
                u[[i, c]] = if d2[c] == F::zero() { share } else { F::zero() };
            }
            continue;
        }
        for c in 0..k {
            let denom: F = d2.iter().map(|&dj| (d2[c] / dj).powf(exponent)).sum();
            u[[i, c]] = F::one() / denom;
        }
    }
    u
}

fn weighted_centroids<F: Scalar>(x: ArrayView2<F>, u: &Array2<F>, m: f64) -> Array2<F> {
    let k = u.ncols();
    let mut cent = Array2::<F>::zeros((k, x.ncols()));
    let m = F::of(m);
    for c in 0..k {
        let mut total = F::zero();
        for (i, row) in x.rows().into_iter().enumerate() {
            let w = u[[i, c]].powf(m);
            total += w;
            cent.row_mut(c).scaled_add(w, &row);
        }
        if total > F::zero() {
            cent.row_mut(c).mapv_inplace(|v| v / total);
        }
    }
    cent
}

/// `Σ_i Σ_c u_ic^m ||x_i − c_c||²`.
pub fn fuzzy_objective<F: Scalar>(x: ArrayView2<F>, centroids: &Array2<F>, u: &Array2<F>, m: f64) -> F {
    let m = F::of(m);
    let mut j = F::zero();
    for (i, row) in x.rows().into_iter().enumerate() {
        for (c, cent) in centroids.rows().into_iter().enumerate() {
            j += u[[i, c]].powf(m) * sq_dist(row, cent);
        }
    }
    j
}

pub fn fuzzy_cmeans<F: Scalar>(
    x: ArrayView2<F>,
    k: usize,
    params: &FuzzyParams,
) -> Result<ClusterAssignment<F>, ClusterError> {
    fuzzy_cmeans_observed(x, k, params, |_| {})
}

/// Fuzzy c-means from a seeded random membership matrix, calling `observe`
/// after every centroid/membership update. Hard labels are the per-row
/// argmax (ties to the lower cluster); a cluster left without members takes
/// the point with the highest membership in it from a cluster that can
/// spare one.
pub fn fuzzy_cmeans_observed<F: Scalar>(
    x: ArrayView2<F>,
    k: usize,
    params: &FuzzyParams,
    mut observe: impl FnMut(&FuzzyStep<'_, F>),
) -> Result<ClusterAssignment<F>, ClusterError> {
    let n = x.nrows();
    check_k(k, n)?;
    if params.m <= 1.0 || !params.m.is_finite() {
        return Err(ClusterError::InvalidParam(format!(
            "fuzziness m = {} must exceed 1",
            params.m
        )));
    }
    let mut rng = stream_rng(params.seed, 0);
    let mut u = Array2::<F>::from_shape_fn((n, k), |_| F::of(rng.random::<f64>() + 1e-12));
    for mut row in u.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    let mut centroids = weighted_centroids(x, &u, params.m);
    for iteration in 0..params.maxiter {
        centroids = weighted_centroids(x, &u, params.m);
        let next = memberships_for(x, &centroids, params.m);
        let max_change = next
            .iter()
            .zip(u.iter())
            .fold(F::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        u = next;
        observe(&FuzzyStep {
            iteration,
            memberships: &u,
            centroids: &centroids,
            objective: fuzzy_objective(x, &centroids, &u, params.m),
            max_change,
        });
        if max_change < F::of(params.error) {
            break;
        }
    }
    let mut labels: Vec<usize> = u.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let donor = (0..n)
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                u[[a, empty]]
                    .partial_cmp(&u[[b, empty]])
                    .expect("finite")
                    .then(b.cmp(&a))
            })
            .expect("n >= k");
        labels[donor] = empty;
    }
    Ok(ClusterAssignment {
        labels,
        k,
        centroids: Some(centroids),
        memberships: Some(u),
        inertia: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_point_splits_evenly() {
        let centroids = array![[-1.0f64, 0.0], [1.0, 0.0]];
        let x = array![[0.0, 3.0]];
        let u = memberships_for(x.view(), &centroids, 2.0);
        assert!((u[[0, 0]] - 0.5).abs() < 1e-6);
        assert!((u[[0, 1]] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn point_on_centroid_gets_full_membership() {
        let centroids = array![[0.0], [5.0]];
        let x = array![[5.0]];
        let u = memberships_for(x.view(), &centroids, 2.0);
        assert_eq!(u.row(0).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_m() {
        let x = array![[0.0], [1.0], [2.0]];
        let p = FuzzyParams {
            m: 1.0,
            ..FuzzyParams::default()
        };
        assert!(fuzzy_cmeans(x.view(), 2, &p).is_err());
    }
}
