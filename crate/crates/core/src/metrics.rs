//! Internal validity indices: silhouette, Calinski–Harabasz, Davies–Bouldin.
//!
//! Distances are Euclidean. Clusters are visited in order of first
//! appearance in the rows, so relabeling leaves every index bitwise
//! unchanged.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::linalg::sq_dist;
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("{k} clusters for {n} points (need k < n)")]
    TooManyClusters { k: usize, n: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("{labels} labels for {rows} rows")]
    Shape { labels: usize, rows: usize },
    #[error("clusters {0} and {1} have coincident centroids")]
    CoincidentCentroids(usize, usize),
    #[error("{index} = {value} is outside its valid range")]
    OutOfBounds { index: &'static str, value: f64 },
}

/// Cluster structure shared by the three indices.
struct Partition<F> {
    k: usize,
    /// Cluster ids in order of first appearance.
    order: Vec<usize>,
    sizes: Vec<usize>,
    centroids: Array2<F>,
}

fn partition<F: Scalar>(x: ArrayView2<F>, labels: &[usize]) -> Result<Partition<F>, MetricError> {
    if labels.len() != x.nrows() {
        return Err(MetricError::Shape {
            labels: labels.len(),
            rows: x.nrows(),
        });
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    if k < 2 {
        return Err(MetricError::TooFewClusters(k));
    }
    let mut sizes = vec![0usize; k];
    let mut order = Vec::with_capacity(k);
    for &l in labels {
        if sizes[l] == 0 {
            order.push(l);
        }
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(MetricError::EmptyCluster(empty));
    }
    let mut centroids = Array2::<F>::zeros((k, x.ncols()));
    for (row, &l) in x.rows().into_iter().zip(labels) {
        centroids.row_mut(l).scaled_add(F::one(), &row);
    }
    for (mut c, &s) in centroids.rows_mut().into_iter().zip(&sizes) {
        let s = F::of_usize(s);
        c.mapv_inplace(|v| v / s);
    }
    Ok(Partition {
        k,
        order,
        sizes,
        centroids,
    })
}

/// Mean silhouette `(b − a) / max(a, b)`. Points in singleton clusters, and
/// points with `a = b = 0`, score 0.
pub fn silhouette_score<F: Scalar>(x: ArrayView2<F>, labels: &[usize]) -> Result<F, MetricError> {
    let part = partition(x, labels)?;
    let n = x.nrows();
    let mut total = F::zero();
    let mut sums = vec![F::zero(); part.k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = F::zero());
        for j in 0..n {
            if j != i {
                sums[labels[j]] += sq_dist(x.row(i), x.row(j)).sqrt();
            }
        }
        let own = labels[i];
        if part.sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / F::of_usize(part.sizes[own] - 1);
        let b = (0..part.k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / F::of_usize(part.sizes[c]))
            .fold(F::infinity(), F::min);
        let denom = a.max(b);
        if denom > F::zero() {
            total += (b - a) / denom;
        }
    }
    let score = total / F::of_usize(n);
    if !(score >= -F::one() && score <= F::one()) {
        return Err(MetricError::OutOfBounds {
            index: "silhouette",
            value: score.f64(),
        });
    }
    Ok(score)
}

/// Between- and within-cluster dispersion traces.
pub fn dispersion_traces<F: Scalar>(x: ArrayView2<F>, labels: &[usize]) -> Result<(F, F), MetricError> {
    let part = partition(x, labels)?;
    Ok(traces(x, labels, &part))
}

fn traces<F: Scalar>(x: ArrayView2<F>, labels: &[usize], part: &Partition<F>) -> (F, F) {
    let n = F::of_usize(x.nrows());
    let global: Array1<F> = x.sum_axis(Axis(0)).mapv(|v| v / n);
    let between = part
        .order
        .iter()
        .map(|&c| F::of_usize(part.sizes[c]) * sq_dist(part.centroids.row(c), global.view()))
        .sum();
    let within = x
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, part.centroids.row(l)))
        .sum();
    (between, within)
}

/// `[Tr(B)/(k−1)] / [Tr(W)/(N−k)]`; `+inf` when every cluster is a single
/// repeated point.
pub fn calinski_harabasz<F: Scalar>(x: ArrayView2<F>, labels: &[usize]) -> Result<F, MetricError> {
    let part = partition(x, labels)?;
    let n = x.nrows();
    if part.k >= n {
        return Err(MetricError::TooManyClusters { k: part.k, n });
    }
    let (between, within) = traces(x, labels, &part);
    if within == F::zero() {
        return Ok(F::infinity());
    }
    let score = (between / F::of_usize(part.k - 1)) / (within / F::of_usize(n - part.k));
    if score.is_nan() || score < F::zero() {
        return Err(MetricError::OutOfBounds {
            index: "calinski_harabasz",
            value: score.f64(),
        });
    }
    Ok(score)
}

/// `(1/k) Σ_i max_{j≠i} (σ_i + σ_j) / d_ij`, with `σ` the mean distance to
/// the own centroid and `d_ij` the centroid distance.
pub fn davies_bouldin<F: Scalar>(x: ArrayView2<F>, labels: &[usize]) -> Result<F, MetricError> {
    let part = partition(x, labels)?;
    let mut scatter = vec![F::zero(); part.k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        scatter[l] += sq_dist(row, part.centroids.row(l)).sqrt();
    }
    for (s, &size) in scatter.iter_mut().zip(&part.sizes) {
        *s /= F::of_usize(size);
    }
    let mut total = F::zero();
    for &i in &part.order {
        let mut worst = F::zero();
        for &j in &part.order {
            if i == j {
                continue;
            }
            let d = sq_dist(part.centroids.row(i), part.centroids.row(j)).sqrt();
            if d == F::zero() {
                return Err(MetricError::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    let score = total / F::of_usize(part.k);
    if score.is_nan() || score < F::zero() {
        return Err(MetricError::OutOfBounds {
            index: "davies_bouldin",
            value: score.f64(),
        });
    }
    Ok(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub silhouette: f64,
    pub chi: f64,
    pub dbi: f64,
}

pub fn quality_scores<F: Scalar>(x: ArrayView2<F>, labels: &[usize]) -> Result<QualityScores, MetricError> {
    Ok(QualityScores {
        silhouette: silhouette_score(x, labels)?.f64(),
        chi: calinski_harabasz(x, labels)?.f64(),
        dbi: davies_bouldin(x, labels)?.f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn coincident_pairs() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]];
        let labels = [0, 0, 1, 1];
        assert_eq!(silhouette_score(x.view(), &labels).unwrap(), 1.0);
        assert_eq!(davies_bouldin(x.view(), &labels).unwrap(), 0.0);
        assert_eq!(calinski_harabasz(x.view(), &labels).unwrap(), f64::INFINITY);
    }

    #[test]
    fn all_coincident_scores_zero() {
        let x = array![[1.0], [1.0], [1.0], [1.0]];
        assert_eq!(silhouette_score(x.view(), &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(
            davies_bouldin(x.view(), &[0, 1, 0, 1]),
            Err(MetricError::CoincidentCentroids(0, 1))
        );
    }

    #[test]
    fn input_errors() {
        let x = array![[0.0], [1.0], [2.0]];
        assert_eq!(
            silhouette_score(x.view(), &[0, 0, 0]),
            Err(MetricError::TooFewClusters(1))
        );
        assert_eq!(
            silhouette_score(x.view(), &[0, 2, 0]),
            Err(MetricError::EmptyCluster(1))
        );
        assert!(matches!(
            silhouette_score(x.view(), &[0, 1]),
            Err(MetricError::Shape { .. })
        ));
        assert_eq!(
            calinski_harabasz(x.view(), &[0, 1, 2]),
            Err(MetricError::TooManyClusters { k: 3, n: 3 })
        );
    }

    #[test]
    fn singleton_cluster_contributes_zero() {
        let x = array![[0.0f64], [1.0], [10.0]];
        // Points 0 and 1: a = 1, b = 10 and 9.
        let expected = ((10.0 - 1.0) / 10.0 + (9.0 - 1.0) / 9.0) / 3.0;
        let s = silhouette_score(x.view(), &[0, 0, 1]).unwrap();
        assert!((s - expected).abs() < 1e-15);
    }
}
