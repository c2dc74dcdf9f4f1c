//! Two-dimensional PCA view of an embedding matrix, used as a cheap stand-in
//! for a t-SNE plot.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::Scalar;

const MAX_POWER_ITERS: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("need at least 2 rows to project, got {0}")]
    TooFewRows(usize),
    #[error("data has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone)]
pub struct Projection<F> {
    /// `n × 2` coordinates on the two leading components.
    pub coords: Array2<F>,
    /// `2 × d` unit components.
    pub components: Array2<F>,
    pub explained_variance: [F; 2],
    pub total_variance: F,
}

/// PCA by power iteration with deflation on the sample covariance. Each
/// component's sign is chosen so its largest-magnitude coordinate is
/// positive (ties to the lowest row).
pub fn project_2d<F: Scalar>(x: ArrayView2<F>) -> Result<Projection<F>, ProjectionError> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(ProjectionError::TooFewRows(n));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / F::of_usize(n - 1);
    let total: F = cov.diag().sum();
    if total.is_nan() || total <= F::zero() {
        return Err(ProjectionError::ZeroVariance);
    }
    let (l1, v1) = leading(&cov, None);
    let deflated = &cov - &outer(&v1, &v1).mapv(|v| v * l1);
    let (l2, v2) = if d > 1 {
        leading(&deflated, Some(&v1))
    } else {
        (F::zero(), Array1::zeros(d))
    };
    let mut components = Array2::zeros((2, d));
    components.row_mut(0).assign(&v1);
    components.row_mut(1).assign(&v2);
    let mut coords = centered.dot(&components.t());
    for c in 0..2 {
        let col = coords.column(c);
        let pivot = col
            .iter()
            .enumerate()
            .fold(
                (0, F::zero()),
                |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
            )
            .0;
        if col[pivot] < F::zero() {
            coords.column_mut(c).mapv_inplace(|v| -v);
            components.row_mut(c).mapv_inplace(|v| -v);
        }
    }
    Ok(Projection {
        coords,
        components,
        explained_variance: [l1, l2.max(F::zero())],
        total_variance: total,
    })
}

fn outer<F: Scalar>(a: &Array1<F>, b: &Array1<F>) -> Array2<F> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn orthogonalize<F: Scalar>(v: &mut Array1<F>, against: Option<&Array1<F>>) {
    if let Some(u) = against {
        let p = v.dot(u);
        v.scaled_add(-p, u);
    }
}

/// Dominant eigenpair of a symmetric PSD matrix, optionally restricted to
/// the complement of `against`.
fn leading<F: Scalar>(m: &Array2<F>, against: Option<&Array1<F>>) -> (F, Array1<F>) {
    let d = m.nrows();
    let tiny = F::epsilon() * F::of(1e3);
    // Deterministic start: the largest column, else the least aligned axis.
    let mut v = m
        .columns()
        .into_iter()
        .max_by(|a, b| a.dot(a).partial_cmp(&b.dot(b)).expect("finite"))
        .expect("d >= 1")
        .to_owned();
    orthogonalize(&mut v, against);
    if v.dot(&v).sqrt() <= tiny {
        let axis = match against {
            Some(u) => (0..d)
                .min_by(|&a, &b| u[a].abs().partial_cmp(&u[b].abs()).expect("finite"))
                .expect("d >= 1"),
            None => 0,
        };
        v = Array1::zeros(d);
        v[axis] = F::one();
        orthogonalize(&mut v, against);
    }
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let tol = F::epsilon() * F::of(64.0);
    for _ in 0..MAX_POWER_ITERS {
        let mut w = m.dot(&v);
        orthogonalize(&mut w, against);
        let norm = w.dot(&w).sqrt();
        if norm <= tiny {
            break;
        }
        w.mapv_inplace(|x| x / norm);
        let shift = (&w - &v).mapv(|x| x * x).sum().sqrt();
        v = w;
        if shift <= tol {
            break;
        }
    }
    (v.dot(&m.dot(&v)), v)
}
