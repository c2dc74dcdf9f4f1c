use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansParams};
use super::linalg::{argmax, sq_dist, svd_square, symmetric_eigen};
use super::{check_k, ClusterAssignment, ClusterError};
use crate::rng::stream_rng;
use crate::Scalar;

/// Dense eigensolves above this many points are refused.
pub const MAX_SPECTRAL_POINTS: usize = 2000;

const MAX_JACOBI_SWEEPS: usize = 100;
const MAX_ROTATION_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelAssign {
    /// Rotate the spectral embedding toward the nearest partition matrix.
    #[default]
    Discretize,
    /// k-means on the row-normalized spectral embedding.
    KMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Affinity<F> {
    /// `exp(−gamma ||x_i − x_j||²)`; `None` means `1 / n_features`.
    Rbf { gamma: Option<F> },
    /// User-supplied symmetric non-negative matrix.
    Precomputed(Array2<F>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams<F> {
    pub seed: u64,
    pub affinity: Affinity<F>,
    pub assign: LabelAssign,
}

impl<F> Default for SpectralParams<F> {
    fn default() -> Self {
        Self {
            seed: 10,
            affinity: Affinity::Rbf { gamma: None },
            assign: LabelAssign::Discretize,
        }
    }
}

pub fn rbf_affinity<F: Scalar>(x: ArrayView2<F>, gamma: F) -> Array2<F> {
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| (-gamma * sq_dist(x.row(i), x.row(j))).exp())
}

/// `I − D^{-1/2} A D^{-1/2}` with the affinity diagonal ignored. Isolated
/// points get a unit diagonal and zero off-diagonals.
pub fn normalized_laplacian<F: Scalar>(affinity: &Array2<F>) -> Array2<F> {
    let n = affinity.nrows();
    let inv_sqrt_deg: Vec<F> = (0..n)
        .map(|i| {
            let d: F = (0..n).filter(|&j| j != i).map(|j| affinity[[i, j]]).sum();
            if d > F::zero() {
                F::one() / d.sqrt()
            } else {
                F::zero()
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            F::one()
        } else {
            -affinity[[i, j]] * (inv_sqrt_deg[i] * inv_sqrt_deg[j])
        }
    })
}

/// Bottom-`k` eigenvectors of the normalized Laplacian, rescaled by
/// `D^{-1/2}`, each sign-flipped so its largest-magnitude entry is positive.
pub fn spectral_embedding<F: Scalar>(affinity: &Array2<F>, k: usize) -> Result<Array2<F>, ClusterError> {
    let n = affinity.nrows();
    let lap = normalized_laplacian(affinity);
    let (_, vectors) = symmetric_eigen(&lap, MAX_JACOBI_SWEEPS)?;
    let deg: Vec<F> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| affinity[[i, j]]).sum())
        .collect();
    let mut emb = Array2::<F>::zeros((n, k));
    for c in 0..k {
        let col = vectors.column(c);
        let pivot = argmax(col.iter().map(|v| v.abs()));
        let sign = if col[pivot] < F::zero() { -F::one() } else { F::one() };
        for i in 0..n {
            let scale = if deg[i] > F::zero() {
                F::one() / deg[i].sqrt()
            } else {
                F::one()
            };
            emb[[i, c]] = sign * col[i] * scale;
        }
    }
    Ok(emb)
}

fn normalize_rows<F: Scalar>(m: &Array2<F>) -> Array2<F> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > F::zero() {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Alternates between the nearest partition indicator and the best
/// orthogonal rotation (via SVD) until the normalized-cut objective stops
/// changing. Returns `None` if it has not settled after 50 iterations or a
/// cluster ends up empty.
pub fn discretize<F: Scalar>(embedding: &Array2<F>, seed: u64) -> Option<Vec<usize>> {
    let (n, k) = embedding.dim();
    let vectors = normalize_rows(embedding);
    let mut rng = stream_rng(seed, 0);
    let mut rotation = Array2::<F>::zeros((k, k));
    rotation.column_mut(0).assign(&vectors.row(rng.random_range(0..n)));
    let mut c = vec![F::zero(); n];
    for j in 1..k {
        let proj = vectors.dot(&rotation.column(j - 1));
        for (ci, p) in c.iter_mut().zip(proj.iter()) {
            *ci += p.abs();
        }
        let pick = super::linalg::argmin(c.iter().copied());
        rotation.column_mut(j).assign(&vectors.row(pick));
    }
    let mut last = F::zero();
    let tol = F::of(1e-12) * F::of_usize(n);
    for _ in 0..MAX_ROTATION_ITERS {
        let t = vectors.dot(&rotation);
        let labels: Vec<usize> = t.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
        let mut indicator = Array2::<F>::zeros((n, k));
        for (i, &l) in labels.iter().enumerate() {
            indicator[[i, l]] = F::one();
        }
        let t_svd = indicator.t().dot(&vectors);
        let (u, s, vt) = svd_square(&t_svd);
        let ncut = F::of(2.0) * (F::of_usize(n) - s.sum());
        if (ncut - last).abs() < tol {
            let mut sizes = vec![0usize; k];
            labels.iter().for_each(|&l| sizes[l] += 1);
            return sizes.iter().all(|&s| s > 0).then_some(labels);
        }
        last = ncut;
        rotation = vt.t().dot(&u.t());
    }
    None
}

/// Spectral clustering on an RBF (or precomputed) affinity.
pub fn spectral<F: Scalar>(
    x: ArrayView2<F>,
    k: usize,
    params: &SpectralParams<F>,
) -> Result<ClusterAssignment<F>, ClusterError> {
    let n = x.nrows();
    check_k(k, n)?;
    if n > MAX_SPECTRAL_POINTS {
        return Err(ClusterError::TooLarge {
            n,
            max: MAX_SPECTRAL_POINTS,
        });
    }
    let affinity = match &params.affinity {
        Affinity::Rbf { gamma } => {
            let gamma = gamma.unwrap_or_else(|| F::one() / F::of_usize(x.ncols()));
            rbf_affinity(x, gamma)
        }
        Affinity::Precomputed(a) => {
            if a.dim() != (n, n) {
                return Err(ClusterError::InvalidParam(format!(
                    "affinity is {:?}, expected {n}x{n}",
                    a.dim()
                )));
            }
            a.clone()
        }
    };
    let embedding = spectral_embedding(&affinity, k)?;
    let discretized = match params.assign {
        LabelAssign::Discretize => discretize(&embedding, params.seed),
        LabelAssign::KMeans => None,
    };
    let labels = match discretized {
        Some(labels) => labels,
        None => {
            let normalized = normalize_rows(&embedding);
            let km = KMeansParams {
                seed: params.seed,
                ..KMeansParams::plus_plus()
            };
            kmeans(normalized.view(), k, &km)?.labels
        }
    };
    let centroids = super::centroids_of(x, &labels, k);
    Ok(ClusterAssignment {
        labels,
        k,
        centroids: Some(centroids),
        memberships: None,
        inertia: None,
    })
}
