//! Dense symmetric eigensolver and small SVD, both Jacobi rotations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::ClusterError;
use crate::Scalar;

#[inline]
pub(crate) fn sq_dist<F: Scalar>(a: ArrayView1<F>, b: ArrayView1<F>) -> F {
    a.iter().zip(b.iter()).fold(F::zero(), |s, (&x, &y)| {
        let d = x - y;
        s + d * d
    })
}

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin<F: Scalar>(values: impl IntoIterator<Item = F>) -> usize {
    let mut best = (0, F::infinity());
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<F: Scalar>(values: impl IntoIterator<Item = F>) -> usize {
    let mut best = (0, F::neg_infinity());
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub(crate) fn count_distinct_rows<F: Scalar>(x: ArrayView2<F>) -> usize {
    let mut rows: Vec<Vec<u64>> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.f64().to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns.
pub fn symmetric_eigen<F: Scalar>(
    matrix: &Array2<F>,
    max_sweeps: usize,
) -> Result<(Array1<F>, Array2<F>), ClusterError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(ClusterError::InvalidParam("matrix is not square".into()));
    }
    let mut a = matrix.clone();
    let mut v = Array2::<F>::eye(n);
    let norm = a.iter().map(|&x| x * x).sum::<F>().sqrt();
    let tol = F::epsilon() * norm.max(F::min_positive_value());
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= F::min_positive_value() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (F::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = F::zero();
                a[[q, p]] = F::zero();
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: F = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum();
        if off.sqrt() > tol * F::of(1e3) {
            return Err(ClusterError::Eigen(format!(
                "Jacobi did not converge in {max_sweeps} sweeps (off-diagonal norm {})",
                off.sqrt()
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[[i, i]]
            .partial_cmp(&a[[j, j]])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    Ok((values, vectors))
}

/// Thin SVD of a square matrix by one-sided Jacobi: `a = u · diag(s) · vt`,
/// singular values descending.
pub fn svd_square<F: Scalar>(a: &Array2<F>) -> (Array2<F>, Array1<F>, Array2<F>) {
    let n = a.nrows();
    let mut u = a.clone();
    let mut v = Array2::<F>::eye(n);
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (F::zero(), F::zero(), F::zero());
                for i in 0..n {
                    alpha += u[[i, p]] * u[[i, p]];
                    beta += u[[i, q]] * u[[i, q]];
                    gamma += u[[i, p]] * u[[i, q]];
                }
                if gamma.abs() <= F::epsilon() * (alpha * beta).sqrt() || gamma == F::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (F::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = c * t;
                for m in [&mut u, &mut v] {
                    for i in 0..n {
                        let (xp, xq) = (m[[i, p]], m[[i, q]]);
                        m[[i, p]] = c * xp - s * xq;
                        m[[i, q]] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<F> = (0..n)
        .map(|j| u.column(j).iter().map(|&x| x * x).sum::<F>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite").then(i.cmp(&j)));
    let s = Array1::from_iter(order.iter().map(|&j| norms[j]));
    let scale_floor = F::epsilon() * s.first().copied().unwrap_or(F::zero()) * F::of_usize(n);
    let mut u_out = Array2::<F>::zeros((n, n));
    let mut vt = Array2::<F>::zeros((n, n));
    let mut filled = Vec::new();
    for (col, &j) in order.iter().enumerate() {
        for i in 0..n {
            vt[[col, i]] = v[[i, j]];
        }
        if norms[j] > scale_floor && norms[j] > F::zero() {
            for i in 0..n {
                u_out[[i, col]] = u[[i, j]] / norms[j];
            }
            filled.push(col);
        }
    }
    // Complete the left basis for (numerically) zero singular values.
    for col in 0..n {
        if filled.contains(&col) {
            continue;
        }
        for e in 0..n {
            let mut cand = Array1::<F>::zeros(n);
            cand[e] = F::one();
            for &f in &filled {
                let proj = u_out.column(f).dot(&cand);
                cand -= &u_out.column(f).mapv(|x| x * proj);
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > F::of(1e-6) {
                u_out.column_mut(col).assign(&cand.mapv(|x| x / norm));
                filled.push(col);
                break;
            }
        }
    }
    (u_out, s, vt)
}
