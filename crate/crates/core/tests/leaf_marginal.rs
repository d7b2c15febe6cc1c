//! Analytic leaf marginal against numerical integration over the leaf mean.

mod common;

use dpmbart_core::bart::{leaf_log_marginal, LeafSuffStats};
use dpmbart_core::rng::stream;
use rand::Rng;

#[test]
fn mixed_precision_five_observations() {
    let r = [0.3, -1.2, 2.0, 0.0, 0.7];
    let s = [0.5, 2.0, 0.5, 2.0, 2.0];
    let analytic = leaf_log_marginal(&LeafSuffStats::from_residuals(&r, &s), 1.3);
    let numeric = common::quadrature_log_marginal(&r, &s, 1.3);
    assert!((analytic - numeric).abs() <= 1e-8 * analytic.abs(), "{} vs {}", analytic, numeric);
}

#[test]
fn random_leaves_match_quadrature() {
    let mut rng = stream(2024, 0);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let size = rng.random_range(0..=50);
        let tau = [0.05, 0.5, 5.0][k % 3];
        let sigma: Vec<f64> = (0..size).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
        let mu = rng.random_range(-2.0..2.0) * tau;
        let r: Vec<f64> = sigma.iter().map(|s| mu + s * rng.random_range(-2.0..2.0)).collect();
        let analytic = leaf_log_marginal(&LeafSuffStats::from_residuals(&r, &sigma), tau);
        if size == 0 {
            assert!(analytic.abs() < 1e-15);
            continue;
        }
        let numeric = common::quadrature_log_marginal(&r, &sigma, tau);
        // relative error of the marginal itself
        let rel = (analytic - numeric).exp_m1().abs();
        worst = worst.max(rel);
        assert!(rel <= 1e-8, "leaf {} (size {}, tau {}): {} vs {}", k, size, tau, analytic, numeric);
    }
    eprintln!("worst relative error {:e}", worst);
}
