mod common;

use common::*;
use erasmo::metrics::{
    calinski_harabasz, davies_bouldin, dispersion_traces, quality_scores, silhouette_score, MetricError,
};
use ndarray::{array, Array2};
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn indices_match_brute_force_on_random_instances() {
    let mut r = rng(42);
    for _ in 0..100 {
        let n = r.random_range(6..=12);
        let d = r.random_range(1..=4);
        let k = r.random_range(2..n.min(5));
        let x = uniform_points(n, d, &mut r);
        let labels = random_labels(n, k, &mut r);
        let rows = to_rows(&x);
        let s = quality_scores(x.view(), &labels).unwrap();
        assert!(close(s.silhouette, brute_silhouette(&rows, &labels), 1e-9));
        assert!(close(s.chi, brute_chi(&rows, &labels), 1e-9));
        assert!(close(s.dbi, brute_dbi(&rows, &labels), 1e-9));
        let (b, w) = dispersion_traces(x.view(), &labels).unwrap();
        let (_, _, total) = brute_traces(&rows, &labels);
        assert!(close(b + w, total, 1e-9));
    }
}

#[test]
fn six_point_hand_computation() {
    // Two triangles; cluster 0 = {(0,0),(3,0),(0,4)}, cluster 1 = {(10,0),(13,0),(10,4)}.
    let x = array![
        [0.0, 0.0],
        [3.0, 0.0],
        [0.0, 4.0],
        [10.0, 0.0],
        [13.0, 0.0],
        [10.0, 4.0]
    ];
    let labels = [0, 0, 0, 1, 1, 1];
    // Point (0,0): a = (3 + 4)/2, b = (10 + 13 + sqrt(116))/3; (3,0) and (0,4) likewise.
    let s0 = {
        let a = 3.5;
        let b = (10.0 + 13.0 + 116f64.sqrt()) / 3.0;
        (b - a) / b
    };
    let s1 = {
        let a = (3.0 + 5.0) / 2.0;
        let b = (7.0 + 10.0 + 65f64.sqrt()) / 3.0;
        (b - a) / b
    };
    let s2 = {
        let a = (4.0 + 5.0) / 2.0;
        let b = (116f64.sqrt() + 185f64.sqrt() + 10.0) / 3.0;
        (b - a) / b
    };
    let s3 = {
        let a = 3.5;
        let b = (10.0 + 7.0 + 116f64.sqrt()) / 3.0;
        (b - a) / b
    };
    let s4 = {
        let a = 4.0;
        let b = (13.0 + 10.0 + 185f64.sqrt()) / 3.0;
        (b - a) / b
    };
    let s5 = {
        let a = 4.5;
        let b = (116f64.sqrt() + 65f64.sqrt() + 10.0) / 3.0;
        (b - a) / b
    };
    let expected_ss = (s0 + s1 + s2 + s3 + s4 + s5) / 6.0;
    assert!((silhouette_score(x.view(), &labels).unwrap() - expected_ss).abs() < 1e-9);

    // Centroids (1, 4/3) and (11, 4/3); sigma is the same for both triangles.
    let c = (1.0, 4.0 / 3.0);
    let sigma = [(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]
        .iter()
        .map(|&(px, py): &(f64, f64)| ((px - c.0).powi(2) + (py - c.1).powi(2)).sqrt())
        .sum::<f64>()
        / 3.0;
    let expected_dbi = 2.0 * sigma / 10.0;
    assert!((davies_bouldin(x.view(), &labels).unwrap() - expected_dbi).abs() < 1e-9);

    // Tr(B) = 6 * 5^2; Tr(W) = 2 * (sum of squared distances within a triangle).
    let w_one: f64 = [(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]
        .iter()
        .map(|&(px, py): &(f64, f64)| (px - c.0).powi(2) + (py - c.1).powi(2))
        .sum();
    let expected_chi = (150.0 / 1.0) / (2.0 * w_one / 4.0);
    assert!((calinski_harabasz(x.view(), &labels).unwrap() - expected_chi).abs() < 1e-9);
}

#[test]
fn coincident_clusters_give_trivial_values() {
    let x = array![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]];
    let labels = [0, 0, 1, 1];
    assert_eq!(silhouette_score(x.view(), &labels).unwrap(), 1.0);
    assert_eq!(davies_bouldin(x.view(), &labels).unwrap(), 0.0);
    assert_eq!(calinski_harabasz(x.view(), &labels).unwrap(), f64::INFINITY);
    let same = array![[2.0], [2.0], [2.0]];
    assert_eq!(silhouette_score(same.view(), &[0, 1, 1]).unwrap(), 0.0);
    assert_eq!(
        davies_bouldin(same.view(), &[0, 1, 1]),
        Err(MetricError::CoincidentCentroids(0, 1))
    );
}

#[test]
fn chi_is_large_on_tight_blobs_and_grows_as_labels_improve() {
    let (x, truth) = blobs(&[&[0.0, 0.0], &[20.0, 0.0]], 20, 0.3, 8);
    let chi = calinski_harabasz(x.view(), &truth).unwrap();
    assert!(chi > 1e3, "{chi}");
    assert!(close(chi, brute_chi(&to_rows(&x), &truth), 1e-9));
    // Start from labels with six points misplaced, fix them one at a time.
    let mut labels = truth.clone();
    let wrong: Vec<usize> = vec![0, 1, 2, 20, 21, 22];
    for &i in &wrong {
        labels[i] = 1 - labels[i];
    }
    let mut last = calinski_harabasz(x.view(), &labels).unwrap();
    for &i in &wrong {
        labels[i] = truth[i];
        let next = calinski_harabasz(x.view(), &labels).unwrap();
        assert!(next > last, "{next} <= {last}");
        last = next;
    }
}

fn rotation(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let m = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

#[test]
fn invariances() {
    let mut r = rng(77);
    for _ in 0..30 {
        let n = r.random_range(8..=20);
        let d = r.random_range(2..=4);
        let k = r.random_range(2..=4);
        let x = uniform_points(n, d, &mut r);
        let labels = random_labels(n, k, &mut r);
        let base = quality_scores(x.view(), &labels).unwrap();

        let shift = Array2::from_shape_fn((1, d), |_| r.random_range(-50.0..50.0));
        let moved = x.dot(&rotation(d, &mut r)) + &shift;
        let m = quality_scores(moved.view(), &labels).unwrap();
        assert!((m.silhouette - base.silhouette).abs() < 1e-7);
        assert!(close(m.chi, base.chi, 1e-7));
        assert!((m.dbi - base.dbi).abs() < 1e-7);

        let c = r.random_range(0.01..100.0);
        let scaled = &x * c;
        let s = quality_scores(scaled.view(), &labels).unwrap();
        assert!((s.silhouette - base.silhouette).abs() < 1e-9);
        assert!(close(s.chi, base.chi, 1e-9));
        assert!((s.dbi - base.dbi).abs() < 1e-9);

        // Relabel with a random bijection.
        let mut perm: Vec<usize> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let p = quality_scores(x.view(), &relabeled).unwrap();
        assert_eq!(p.silhouette.to_bits(), base.silhouette.to_bits());
        assert_eq!(p.chi.to_bits(), base.chi.to_bits());
        assert_eq!(p.dbi.to_bits(), base.dbi.to_bits());

        assert!((-1.0..=1.0).contains(&base.silhouette) && base.chi >= 0.0 && base.dbi >= 0.0);
    }
}

#[test]
fn single_precision_agrees() {
    let mut r = rng(3);
    let x = uniform_points(30, 3, &mut r);
    let labels = random_labels(30, 3, &mut r);
    let x32 = x.mapv(|v| v as f32);
    let a = silhouette_score(x.view(), &labels).unwrap();
    let b = silhouette_score(x32.view(), &labels).unwrap();
    assert!((a - b as f64).abs() < 1e-5);
}
