//! Clustering algorithms and silhouette-driven choice of `k`.

mod fuzzy;
mod kmeans;
pub mod linalg;
mod spectral;
mod ward;

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fuzzy::{fuzzy_cmeans, fuzzy_cmeans_observed, fuzzy_objective, memberships_for, FuzzyParams, FuzzyStep};
pub use kmeans::{kmeans, lloyd, KMeansInit, KMeansParams, LloydRun};
pub use spectral::{
    discretize, normalized_laplacian, rbf_affinity, spectral, spectral_embedding, Affinity, LabelAssign,
    SpectralParams, MAX_SPECTRAL_POINTS,
};
pub use ward::ahc_ward;

use crate::metrics::{silhouette_score, MetricError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k = {k} out of range for {n} points (need 2 <= k <= n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("empty k range")]
    EmptyRange,
    #[error("{n} points exceed the dense eigensolver limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("eigensolver: {0}")]
    Eigen(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Hard labels in `0..k` plus whatever extra output the algorithm has.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<F> {
    pub labels: Vec<usize>,
    pub k: usize,
    pub centroids: Option<Array2<F>>,
    /// `n × k`, fuzzy c-means only.
    pub memberships: Option<Array2<F>>,
    /// Within-cluster sum of squares, k-means only.
    pub inertia: Option<F>,
}

impl<F> ClusterAssignment<F> {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<(), ClusterError> {
    if k < 2 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    Ok(())
}

pub(crate) fn relabel_by_first_appearance(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&r| {
            let next = map.len();
            *map.entry(r).or_insert(next)
        })
        .collect()
}

pub(crate) fn centroids_of<F: Scalar>(x: ArrayView2<F>, labels: &[usize], k: usize) -> Array2<F> {
    let mut sums = Array2::<F>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        sums.row_mut(l).scaled_add(F::one(), &row);
        counts[l] += 1;
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            let c = F::of_usize(c);
            row.mapv_inplace(|v| v / c);
        }
    }
    sums
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Kmeans,
    KmeansPp,
    AhcWard,
    FuzzyCm,
    Spectral,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::Kmeans,
        AlgorithmKind::KmeansPp,
        AlgorithmKind::AhcWard,
        AlgorithmKind::FuzzyCm,
        AlgorithmKind::Spectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Kmeans => "kmeans",
            AlgorithmKind::KmeansPp => "kmeans_pp",
            AlgorithmKind::AhcWard => "ahc_ward",
            AlgorithmKind::FuzzyCm => "fuzzy_cm",
            AlgorithmKind::Spectral => "spectral",
        }
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Spectral settings in configuration form (scalar-independent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSpec {
    pub seed: u64,
    /// RBF width; `None` uses `1 / n_features`.
    pub gamma: Option<f64>,
    pub assign: LabelAssign,
}

impl Default for SpectralSpec {
    fn default() -> Self {
        Self {
            seed: 10,
            gamma: None,
            assign: LabelAssign::Discretize,
        }
    }
}

/// k-means keys as written in configuration; missing keys take the defaults
/// of the algorithm kind rather than of [`KMeansParams`].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KMeansKeys {
    init: Option<KMeansInit>,
    n_init: Option<usize>,
    seed: Option<u64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
}

fn kmeans_keys<'de, D: serde::Deserializer<'de>>(d: D, base: KMeansParams) -> Result<KMeansParams, D::Error> {
    let keys = KMeansKeys::deserialize(d)?;
    if keys.init.is_some_and(|i| i != base.init) {
        return Err(serde::de::Error::custom(format!(
            "init {:?} contradicts the algorithm kind",
            keys.init.unwrap()
        )));
    }
    Ok(KMeansParams {
        init: base.init,
        n_init: keys.n_init.unwrap_or(base.n_init),
        seed: keys.seed.unwrap_or(base.seed),
        max_iter: keys.max_iter.unwrap_or(base.max_iter),
        tol: keys.tol.unwrap_or(base.tol),
    })
}

fn random_kmeans<'de, D: serde::Deserializer<'de>>(d: D) -> Result<KMeansParams, D::Error> {
    kmeans_keys(d, KMeansParams::random())
}

fn plus_plus_kmeans<'de, D: serde::Deserializer<'de>>(d: D) -> Result<KMeansParams, D::Error> {
    kmeans_keys(d, KMeansParams::plus_plus())
}

/// An algorithm together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    #[serde(deserialize_with = "random_kmeans")]
    Kmeans(KMeansParams),
    #[serde(deserialize_with = "plus_plus_kmeans")]
    KmeansPp(KMeansParams),
    AhcWard,
    FuzzyCm(FuzzyParams),
    Spectral(SpectralSpec),
}

impl AlgorithmSpec {
    /// The reference parameterization of each algorithm: k-means random
    /// init with 10 restarts and seed 0, k-means++ with one run and seed 0,
    /// Euclidean Ward, fuzzy c-means with m = 2, error 0.005 and 1000
    /// iterations, spectral with discretize labels and seed 10.
    pub fn reference(kind: AlgorithmKind) -> Self {
        match kind {
            AlgorithmKind::Kmeans => AlgorithmSpec::Kmeans(KMeansParams::random()),
            AlgorithmKind::KmeansPp => AlgorithmSpec::KmeansPp(KMeansParams::plus_plus()),
            AlgorithmKind::AhcWard => AlgorithmSpec::AhcWard,
            AlgorithmKind::FuzzyCm => AlgorithmSpec::FuzzyCm(FuzzyParams::default()),
            AlgorithmKind::Spectral => AlgorithmSpec::Spectral(SpectralSpec::default()),
        }
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgorithmSpec::Kmeans(_) => AlgorithmKind::Kmeans,
            AlgorithmSpec::KmeansPp(_) => AlgorithmKind::KmeansPp,
            AlgorithmSpec::AhcWard => AlgorithmKind::AhcWard,
            AlgorithmSpec::FuzzyCm(_) => AlgorithmKind::FuzzyCm,
            AlgorithmSpec::Spectral(_) => AlgorithmKind::Spectral,
        }
    }

    pub fn run<F: Scalar>(&self, x: ArrayView2<F>, k: usize) -> Result<ClusterAssignment<F>, ClusterError> {
        match self {
            AlgorithmSpec::Kmeans(p) | AlgorithmSpec::KmeansPp(p) => kmeans(x, k, p),
            AlgorithmSpec::AhcWard => ahc_ward(x, k),
            AlgorithmSpec::FuzzyCm(p) => fuzzy_cmeans(x, k, p),
            AlgorithmSpec::Spectral(s) => spectral(
                x,
                k,
                &SpectralParams {
                    seed: s.seed,
                    affinity: Affinity::Rbf {
                        gamma: s.gamma.map(F::of),
                    },
                    assign: s.assign,
                },
            ),
        }
    }
}

/// Result of a silhouette sweep over candidate cluster counts.
#[derive(Debug, Clone)]
pub struct Selection<F> {
    pub best_k: usize,
    pub assignment: ClusterAssignment<F>,
    pub silhouette: F,
    /// `(k, silhouette)` for every candidate, in sweep order.
    pub sweep: Vec<(usize, F)>,
}

/// Runs `spec` for each `k` and keeps the highest silhouette; ties go to the
/// smallest `k`.
pub fn select_k<F: Scalar>(
    x: ArrayView2<F>,
    spec: &AlgorithmSpec,
    k_range: impl IntoIterator<Item = usize>,
) -> Result<Selection<F>, ClusterError> {
    let mut ks: Vec<usize> = k_range.into_iter().collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(ClusterError::EmptyRange);
    }
    let n = x.nrows();
    if let Some(&k) = ks.iter().find(|&&k| k < 2 || k + 1 > n) {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    let mut best: Option<(usize, ClusterAssignment<F>, F)> = None;
    let mut sweep = Vec::with_capacity(ks.len());
    for k in ks {
        let assignment = spec.run(x, k)?;
        let ss = silhouette_score(x, &assignment.labels)?;
        sweep.push((k, ss));
        if best.as_ref().is_none_or(|(_, _, b)| ss > *b) {
            best = Some((k, assignment, ss));
        }
    }
    let (best_k, assignment, silhouette) = best.expect("non-empty range");
    Ok(Selection {
        best_k,
        assignment,
        silhouette,
        sweep,
    })
}

/// `row_id,label[,membership_0..membership_{k-1}]` CSV.
pub fn write_assignments<F: Scalar, W: Write>(
    mut out: W,
    row_ids: &[u64],
    assignment: &ClusterAssignment<F>,
) -> std::io::Result<()> {
    write!(out, "row_id,label")?;
    if assignment.memberships.is_some() {
        for c in 0..assignment.k {
            write!(out, ",membership_{c}")?;
        }
    }
    writeln!(out)?;
    for (i, (&id, &label)) in row_ids.iter().zip(&assignment.labels).enumerate() {
        write!(out, "{id},{label}")?;
        if let Some(u) = &assignment.memberships {
            for c in 0..assignment.k {
                write!(out, ",{}", u[[i, c]])?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
