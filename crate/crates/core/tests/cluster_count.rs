//! The cluster-count law P(I | alpha, n) and the alpha draw, checked against
//! brute-force enumeration and direct arithmetic.

mod common;

use common::{crp_probability, for_each_partition};
use dpmbart_core::dpm::{alpha_posterior_weights, log_p_clusters_given_alpha, ClusterCountModel};
use dpmbart_core::prior::calibrate_alpha_prior;

#[test]
fn bell_numbers() {
    let bell = [1usize, 2, 5, 15, 52, 203, 877, 4140];
    for (n, &b) in (1..=8).zip(&bell) {
        let mut count = 0;
        for_each_partition(n, &mut |_| count += 1);
        assert_eq!(count, b);
    }
}

#[test]
fn matches_partition_enumeration() {
    for n in 1..=8 {
        for alpha in [0.1, 1.0, 10.0] {
            let mut by_k = vec![0.0; n + 1];
            for_each_partition(n, &mut |labels| {
                let k = labels.iter().max().unwrap() + 1;
                by_k[k] += crp_probability(labels, alpha);
            });
            for (k, &p) in by_k.iter().enumerate().skip(1) {
                let ours = log_p_clusters_given_alpha(k, n, alpha).unwrap().exp();
                assert!((ours - p).abs() <= 1e-9 * p, "n={} alpha={} k={}: {} vs {}", n, alpha, k, ours, p);
            }
        }
    }
}

#[test]
fn normalised_up_to_twelve() {
    for n in 1..=12 {
        for alpha in [0.1, 1.0, 10.0, 0.37, 55.0] {
            let total: f64 = (1..=n).map(|k| log_p_clusters_given_alpha(k, n, alpha).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-10, "n={} alpha={}: {}", n, alpha, total);
        }
    }
}

#[test]
fn out_of_range_counts_are_errors() {
    assert!(log_p_clusters_given_alpha(0, 5, 1.0).is_err());
    assert!(log_p_clusters_given_alpha(6, 5, 1.0).is_err());
}

/// Coefficients of alpha (alpha + 1) ... (alpha + n - 1), i.e. the unsigned
/// Stirling numbers of the first kind, by direct polynomial multiplication.
fn rising_factorial_coefficients(n: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for j in 0..n {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &v) in c.iter().enumerate() {
            next[k + 1] += v;
            next[k] += v * j as f64;
        }
        c = next;
    }
    c
}

fn direct_distribution(n: usize, alpha: f64) -> Vec<f64> {
    let s = rising_factorial_coefficients(n);
    let weights: Vec<f64> = (0..=n).map(|k| s[k] * alpha.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

#[test]
fn alpha_max_has_requested_mode() {
    let prior = calibrate_alpha_prior(100, 1, 10, 0.5).unwrap();
    let p = direct_distribution(100, prior.alpha_max);
    let mode = (1..=100).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    assert_eq!(mode, 10);
    // and it is the smallest such alpha, up to the bisection tolerance
    let below = direct_distribution(100, prior.alpha_max * (1.0 - 1e-6));
    let mode_below = (1..=100).max_by(|&a, &b| below[a].total_cmp(&below[b])).unwrap();
    assert!(mode_below < 10);
    for (k, &pk) in p.iter().enumerate().skip(1) {
        let ours = log_p_clusters_given_alpha(k, 100, prior.alpha_max).unwrap().exp();
        assert!((ours - pk).abs() <= 1e-9 * pk.max(1e-300) + 1e-300);
    }
}

#[test]
fn grid_weights_match_direct_ratios() {
    let n = 20;
    let prior = calibrate_alpha_prior(n, 1, 2, 0.5).unwrap();
    let model = ClusterCountModel::new(n);
    for i in [1, 2, 5, 9] {
        let w = alpha_posterior_weights(i, &prior, &model).unwrap();
        let s = rising_factorial_coefficients(n);
        let direct: Vec<f64> = prior
            .grid
            .iter()
            .zip(&prior.weights)
            .map(|(&a, &pw)| {
                let rising: f64 = (0..n).map(|j| a + j as f64).product();
                s[i] * a.powi(i as i32) / rising * pw
            })
            .collect();
        let total: f64 = direct.iter().sum();
        for (a, b) in w.iter().zip(&direct) {
            assert!((a - b / total).abs() < 1e-12, "I={}: {} vs {}", i, a, b / total);
        }
    }
}

#[test]
fn alpha_posterior_mean_increases_with_clusters() {
    let n = 100;
    let prior = calibrate_alpha_prior(n, 1, 10, 0.5).unwrap();
    let model = ClusterCountModel::new(n);
    let means: Vec<f64> = [2, 10, 30]
        .iter()
        .map(|&i| {
            let w = alpha_posterior_weights(i, &prior, &model).unwrap();
            w.iter().zip(&prior.grid).map(|(w, a)| w * a).sum()
        })
        .collect();
    assert!(means[0] <= means[1] && means[1] <= means[2], "{:?}", means);
}
