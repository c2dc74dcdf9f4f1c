use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{argmin, count_distinct_rows, sq_dist};
use super::{check_k, ClusterAssignment, ClusterError};
use crate::rng::stream_rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KMeansInit {
    /// k distinct observations drawn uniformly.
    Random,
    /// D²-weighted seeding.
    PlusPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansParams {
    pub init: KMeansInit,
    pub n_init: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self::random()
    }
}

impl KMeansParams {
    /// Random init, 10 restarts, seed 0.
    pub fn random() -> Self {
        Self {
            init: KMeansInit::Random,
            n_init: 10,
            seed: 0,
            max_iter: 300,
            tol: 1e-4,
        }
    }

    /// k-means++ init, a single run, seed 0.
    pub fn plus_plus() -> Self {
        Self {
            init: KMeansInit::PlusPlus,
            n_init: 1,
            ..Self::random()
        }
    }
}

/// One Lloyd run from fixed starting centroids.
#[derive(Debug, Clone)]
pub struct LloydRun<F> {
    pub labels: Vec<usize>,
    pub centroids: Array2<F>,
    pub inertia: F,
    /// SSE after each assignment step, ending with the final inertia.
    pub sse_trace: Vec<F>,
    pub iterations: usize,
}

fn assign<F: Scalar>(x: ArrayView2<F>, centroids: &Array2<F>, labels: &mut [usize]) {
    for (i, row) in x.rows().into_iter().enumerate() {
        labels[i] = argmin(centroids.rows().into_iter().map(|c| sq_dist(row, c)));
    }
}

/// Moves the point farthest from its centroid (among clusters with more
/// than one member) into each empty cluster and centres that cluster on it.
fn repair_empty<F: Scalar>(x: ArrayView2<F>, centroids: &mut Array2<F>, labels: &mut [usize]) -> bool {
    let k = centroids.nrows();
    let mut repaired = false;
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repaired;
        };
        let mut best: Option<(usize, F)> = None;
        for (i, row) in x.rows().into_iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(row, centroids.row(labels[i]));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("n >= k guarantees a donor cluster");
        labels[i] = empty;
        centroids.row_mut(empty).assign(&x.row(i));
        repaired = true;
    }
}

fn sse<F: Scalar>(x: ArrayView2<F>, centroids: &Array2<F>, labels: &[usize]) -> F {
    x.rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, centroids.row(l)))
        .sum()
}

fn means<F: Scalar>(x: ArrayView2<F>, labels: &[usize], k: usize) -> Array2<F> {
    let mut sums = Array2::<F>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
        let c = F::of_usize(c.max(1));
        s.mapv_inplace(|v| v / c);
    }
    sums
}

/// Absolute convergence threshold: `tol` times the mean per-feature variance.
fn absolute_tol<F: Scalar>(x: ArrayView2<F>, tol: f64) -> F {
    let n = F::of_usize(x.nrows());
    let mean = x.sum_axis(Axis(0)).mapv(|v| v / n);
    let var: F = x.rows().into_iter().map(|r| sq_dist(r, mean.view())).sum::<F>() / (n * F::of_usize(x.ncols()));
    F::of(tol) * var
}

/// Lloyd iterations until the squared centroid shift drops to the absolute
/// tolerance or `max_iter` is reached.
pub fn lloyd<F: Scalar>(x: ArrayView2<F>, initial: Array2<F>, max_iter: usize, tol: f64) -> LloydRun<F> {
    let k = initial.nrows();
    let tol = absolute_tol(x, tol);
    let mut centroids = initial;
    let mut labels = vec![0usize; x.nrows()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        assign(x, &centroids, &mut labels);
        repair_empty(x, &mut centroids, &mut labels);
        trace.push(sse(x, &centroids, &labels));
        let updated = means(x, &labels, k);
        let shift: F = updated
            .rows()
            .into_iter()
            .zip(centroids.rows())
            .map(|(a, b)| sq_dist(a, b))
            .sum();
        centroids = updated;
        if shift <= tol {
            break;
        }
    }
    assign(x, &centroids, &mut labels);
    if repair_empty(x, &mut centroids, &mut labels) {
        centroids = means(x, &labels, k);
    }
    let inertia = sse(x, &centroids, &labels);
    trace.push(inertia);
    LloydRun {
        labels,
        centroids,
        inertia,
        sse_trace: trace,
        iterations,
    }
}

fn init_random<F: Scalar, R: Rng>(x: ArrayView2<F>, k: usize, rng: &mut R) -> Array2<F> {
    let idx = sample(rng, x.nrows(), k);
    x.select(Axis(0), &idx.into_vec())
}

fn init_plus_plus<F: Scalar, R: Rng>(x: ArrayView2<F>, k: usize, rng: &mut R) -> Array2<F> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut closest: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, x.row(chosen[0])).f64())
        .collect();
    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = 0;
            for (i, &d) in closest.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                cum += d;
                pick = i;
                if cum > target {
                    break;
                }
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, r) in x.rows().into_iter().enumerate() {
            closest[i] = closest[i].min(sq_dist(r, x.row(next)).f64());
        }
    }
    x.select(Axis(0), &chosen)
}

/// Best of `n_init` Lloyd runs by inertia; restart `r` draws from stream `r`
/// of `seed`.
pub fn kmeans<F: Scalar>(
    x: ArrayView2<F>,
    k: usize,
    params: &KMeansParams,
) -> Result<ClusterAssignment<F>, ClusterError> {
    check_k(k, x.nrows())?;
    if params.n_init == 0 || params.max_iter == 0 {
        return Err(ClusterError::InvalidParam(
            "n_init and max_iter must be positive".into(),
        ));
    }
    let distinct = count_distinct_rows(x);
    if distinct < k {
        return Err(ClusterError::TooFewDistinct { k, distinct });
    }
    let mut best: Option<LloydRun<F>> = None;
    for restart in 0..params.n_init {
        let mut rng = stream_rng(params.seed, restart as u64);
        let initial = match params.init {
            KMeansInit::Random => init_random(x, k, &mut rng),
            KMeansInit::PlusPlus => init_plus_plus(x, k, &mut rng),
        };
        let run = lloyd(x, initial, params.max_iter, params.tol);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("n_init >= 1");
    Ok(ClusterAssignment {
        labels: best.labels,
        k,
        centroids: Some(best.centroids),
        memberships: None,
        inertia: Some(best.inertia),
    })
}
