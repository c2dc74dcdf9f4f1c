//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn to_rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_of(points: &[&Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut m = vec![0.0; d];
    for p in points {
        for (mi, pi) in m.iter_mut().zip(p.iter()) {
            *mi += pi;
        }
    }
    m.iter_mut().for_each(|v| *v /= points.len() as f64);
    m
}

fn members<'a>(x: &'a [Vec<f64>], labels: &[usize], c: usize) -> Vec<&'a Vec<f64>> {
    x.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect()
}

/// Adjusted Rand index from the contingency table.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Sum of squared distances to cluster means.
pub fn sse(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    (0..k)
        .map(|c| {
            let pts = members(x, labels, c);
            if pts.is_empty() {
                return 0.0;
            }
            let m = mean_of(&pts);
            pts.iter().map(|p| dist(p, &m).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Ward clustering recomputed from scratch at every merge: the pair of
/// clusters whose union raises the total SSE least is merged; ties go to the
/// pair with the smallest (min index, min index).
pub fn naive_ward(x: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..x.len()).map(|i| vec![i]).collect();
    let cost = |c: &[usize]| -> f64 {
        let pts: Vec<&Vec<f64>> = c.iter().map(|&i| &x[i]).collect();
        let m = mean_of(&pts);
        pts.iter().map(|p| dist(p, &m).powi(2)).sum()
    };
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let union: Vec<usize> = clusters[a].iter().chain(&clusters[b]).copied().collect();
                let delta = cost(&union) - cost(&clusters[a]) - cost(&clusters[b]);
                if delta < best.0 {
                    best = (delta, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
    }
    let mut labels = vec![0; x.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = c;
        }
    }
    labels
}

pub fn brute_silhouette(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| dist(&x[i], &x[j])).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|&c| c != labels[i]) {
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let mean = other.iter().map(|&j| dist(&x[i], &x[j])).sum::<f64>() / other.len() as f64;
            b = b.min(mean);
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// Between and within scatter matrices, traced.
pub fn brute_traces(x: &[Vec<f64>], labels: &[usize]) -> (f64, f64, f64) {
    let d = x[0].len();
    let k = labels.iter().max().unwrap() + 1;
    let all: Vec<&Vec<f64>> = x.iter().collect();
    let g = nalgebra::DVector::from_vec(mean_of(&all));
    let mut b = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut w = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut t = nalgebra::DMatrix::<f64>::zeros(d, d);
    for c in 0..k {
        let pts = members(x, labels, c);
        let m = nalgebra::DVector::from_vec(mean_of(&pts));
        let dm = &m - &g;
        b += (&dm * dm.transpose()) * pts.len() as f64;
        for p in pts {
            let dp = nalgebra::DVector::from_vec(p.clone()) - &m;
            w += &dp * dp.transpose();
        }
    }
    for p in x {
        let dp = nalgebra::DVector::from_vec(p.clone()) - &g;
        t += &dp * dp.transpose();
    }
    (b.trace(), w.trace(), t.trace())
}

pub fn brute_chi(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = (labels.iter().max().unwrap() + 1) as f64;
    let (b, w, _) = brute_traces(x, labels);
    (b / (k - 1.0)) / (w / (x.len() as f64 - k))
}

pub fn brute_dbi(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let cents: Vec<Vec<f64>> = (0..k).map(|c| mean_of(&members(x, labels, c))).collect();
    let sigma: Vec<f64> = (0..k)
        .map(|c| {
            let pts = members(x, labels, c);
            pts.iter().map(|p| dist(p, &cents[c])).sum::<f64>() / pts.len() as f64
        })
        .collect();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (sigma[i] + sigma[j]) / dist(&cents[i], &cents[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

/// Labels in `0..k` with every cluster non-empty.
pub fn random_labels(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if (0..k).all(|c| labels.contains(&c)) {
            return labels;
        }
    }
}

pub fn uniform_points(n: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-5.0..5.0))
}

/// Gaussian blobs around `centers`, `per` points each, labels in center order.
pub fn blobs(centers: &[&[f64]], per: usize, spread: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let d = centers[0].len();
    let mut x = Array2::zeros((centers.len() * per, d));
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for p in 0..per {
            for j in 0..d {
                x[[c * per + p, j]] = center[j] + noise.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    (x, labels)
}

/// Two concentric circles of radius 1 and 4, `n / 2` evenly spaced points each.
pub fn rings(n: usize) -> (Array2<f64>, Vec<usize>) {
    let half = n / 2;
    let mut x = Array2::zeros((2 * half, 2));
    let mut labels = Vec::new();
    for (ring, radius) in [1.0, 4.0].into_iter().enumerate() {
        for p in 0..half {
            let theta = 2.0 * std::f64::consts::PI * p as f64 / half as f64;
            x[[ring * half + p, 0]] = radius * theta.cos();
            x[[ring * half + p, 1]] = radius * theta.sin();
            labels.push(ring);
        }
    }
    (x, labels)
}

/// Synthetic customer table with two latent groups: n rows, 6 mixed
/// columns (3 numeric, 3 categorical). Five columns depend on the group;
/// `contact` is group-independent noise. Returns the CSV text and the group
/// of each row.
pub fn two_group_csv(n: usize, seed: u64) -> (String, Vec<usize>) {
    let mut r = rng(seed);
    let mut csv = String::from("age,job,balance,housing,contact,visits\n");
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % 2;
        let contact = ["cellular", "telephone", "email", "unknown"][r.random_range(0..4)];
        let (age, job, balance, housing, visits) = if g == 0 {
            (
                r.random_range(22..36),
                "student",
                r.random_range(1..10) * 100,
                "yes",
                r.random_range(1..4),
            )
        } else {
            (
                r.random_range(58..75),
                "retired",
                r.random_range(20..90) * 1000,
                "no",
                r.random_range(20..40),
            )
        };
        csv += &format!("{age},{job},{balance},{housing},{contact},{visits}\n");
        groups.push(g);
    }
    (csv, groups)
}
