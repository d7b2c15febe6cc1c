//! Reductions of kept draws: posterior-mean fit with pointwise intervals,
//! predictive error densities, and the distances used to compare them.

use serde::{Deserialize, Serialize};

use crate::data::{min_max, sample_sd};
use crate::dist::{normal_pdf, quantile_sorted};
use crate::dpm::Baseline;
use crate::error::{Error, Result};
use crate::sampler::{DrawRecord, ErrorDraw};

pub const DENSITY_GRID_POINTS: usize = 512;
const LO_P: f64 = 0.025;
const HI_P: f64 = 0.975;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub fhat: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

impl FitSummary {
    pub fn mean_width(&self) -> f64 {
        self.lo95.iter().zip(&self.hi95).map(|(l, h)| h - l).sum::<f64>() / self.lo95.len() as f64
    }

    /// Fraction of points whose interval contains `truth`.
    pub fn coverage(&self, truth: &[f64]) -> f64 {
        let hit = self
            .lo95
            .iter()
            .zip(&self.hi95)
            .zip(truth)
            .filter(|((l, h), t)| *l <= *t && *t <= *h)
            .count();
        hit as f64 / truth.len() as f64
    }

    pub fn rmse(&self, truth: &[f64]) -> f64 {
        rmse(&self.fhat, truth)
    }
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Pointwise mean and equal-tailed 95% intervals (linear interpolation
/// between order statistics) over the kept fits.
pub fn summarize_fit(draws: &[DrawRecord]) -> Result<FitSummary> {
    let fits: Vec<&[f64]> = draws.iter().map(|d| d.fit.as_slice()).collect();
    summarize_fit_values(&fits)
}

pub fn summarize_fit_values(fits: &[&[f64]]) -> Result<FitSummary> {
    let d = fits.len();
    if d < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 kept draws, got {}", d)));
    }
    let n = fits[0].len();
    let mut column = vec![0.0; d];
    let mut out = FitSummary {
        fhat: Vec::with_capacity(n),
        lo95: Vec::with_capacity(n),
        hi95: Vec::with_capacity(n),
    };
    for i in 0..n {
        for (c, f) in column.iter_mut().zip(fits) {
            *c = f[i];
        }
        out.fhat.push(column.iter().sum::<f64>() / d as f64);
        column.sort_by(f64::total_cmp);
        out.lo95.push(quantile_sorted(&column, LO_P));
        out.hi95.push(quantile_sorted(&column, HI_P));
    }
    Ok(out)
}

/// `DENSITY_GRID_POINTS` equally spaced points over
/// `[min(r) - sd(r), max(r) + sd(r)]`.
pub fn density_grid(residuals: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(residuals.iter().copied());
    let sd = sample_sd(residuals);
    linspace(lo - sd, hi + sd, DENSITY_GRID_POINTS)
}

pub fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    let step = (b - a) / (points - 1) as f64;
    (0..points).map(|k| a + step * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Mean over draws of the Polya-urn predictive density of a new error, with
/// pointwise equal-tailed 95% bands.
pub fn predictive_error_density(draws: &[DrawRecord], grid: &[f64], baseline: &Baseline) -> Result<DensitySummary> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("density grid is empty".into()));
    }
    let per_draw: Vec<Vec<f64>> = draws
        .iter()
        .filter_map(|d| match &d.errors {
            ErrorDraw::Clusters { clusters, alpha } => Some(
                grid.iter()
                    .map(|&e| clusters.predictive_density(e, *alpha, baseline))
                    .collect(),
            ),
            ErrorDraw::Sigma(_) => None,
        })
        .collect();
    if per_draw.is_empty() {
        return Err(Error::InvalidArgument("no mixture draws to summarize".into()));
    }
    let refs: Vec<&[f64]> = per_draw.iter().map(|v| v.as_slice()).collect();
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    let mut mean = Vec::with_capacity(grid.len());
    let mut column = vec![0.0; refs.len()];
    for k in 0..grid.len() {
        for (c, d) in column.iter_mut().zip(&refs) {
            *c = d[k];
        }
        mean.push(column.iter().sum::<f64>() / column.len() as f64);
        column.sort_by(f64::total_cmp);
        lo.push(quantile_sorted(&column, LO_P));
        hi.push(quantile_sorted(&column, HI_P));
    }
    Ok(DensitySummary {
        grid: grid.to_vec(),
        mean,
        lo,
        hi,
    })
}

/// `N(e | 0, sigma^2)` averaged over sigma draws.
pub fn bart_average_density(sigmas: &[f64], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&e| sigmas.iter().map(|&s| normal_pdf(e, 0.0, s)).sum::<f64>() / sigmas.len() as f64)
        .collect()
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
        .sum()
}

/// `∫ |a - b|` over the grid by the trapezoid rule.
pub fn l1_distance(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(grid, &diff)
}

/// A density with an exact distribution function.
pub trait ExactDensity {
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
}

/// `∫ |est - truth|` over the grid range, computed as
/// `P_truth(range) + ∫ est - 2 ∫ min(est, truth)`. Only the bounded integrand
/// `min(est, truth)` goes through the trapezoid rule, which keeps the
/// distance accurate for true densities with integrable poles.
pub fn l1_to_truth<D: ExactDensity + ?Sized>(grid: &[f64], est: &[f64], truth: &D) -> f64 {
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let mass = truth.cdf(b) - truth.cdf(a);
    let lower: Vec<f64> = grid.iter().zip(est).map(|(&x, &e)| e.min(truth.pdf(x))).collect();
    mass + trapezoid(grid, est) - 2.0 * trapezoid(grid, &lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpm::{ClusterSnapshot, Theta};
    use crate::prior::BaselineG0;
    use crate::rng::stream;

    fn record(fit: Vec<f64>) -> DrawRecord {
        DrawRecord {
            iter: 0,
            fit,
            errors: ErrorDraw::Sigma(1.0),
        }
    }

    #[test]
    fn mean_of_two_draws() {
        let s = summarize_fit(&[record(vec![1.0, 0.0]), record(vec![3.0, 0.0])]).unwrap();
        assert_eq!(s.fhat, vec![2.0, 0.0]);
        assert!(summarize_fit(&[record(vec![1.0])]).is_err());
    }

    #[test]
    fn constant_draws_have_zero_width() {
        let draws: Vec<DrawRecord> = (0..10).map(|_| record(vec![1.5, -2.0])).collect();
        let s = summarize_fit(&draws).unwrap();
        assert_eq!(s.lo95, s.hi95);
        assert_eq!(s.mean_width(), 0.0);
    }

    #[test]
    fn interval_endpoints_for_normal_draws() {
        let mut rng = stream(31, 0);
        let n = 50;
        let draws: Vec<DrawRecord> = (0..200)
            .map(|_| record((0..n).map(|_| crate::dist::std_normal(&mut rng)).collect()))
            .collect();
        let s = summarize_fit(&draws).unwrap();
        for i in 0..n {
            assert!((s.lo95[i] + 1.96).abs() < 0.5 && (s.hi95[i] - 1.96).abs() < 0.5);
        }
        let avg_lo = s.lo95.iter().sum::<f64>() / n as f64;
        let avg_hi = s.hi95.iter().sum::<f64>() / n as f64;
        assert!((avg_lo + 1.96).abs() < 0.15, "{}", avg_lo);
        assert!((avg_hi - 1.96).abs() < 0.15, "{}", avg_hi);
    }

    #[test]
    fn degenerate_mixture_density_is_standard_normal() {
        let base = Baseline::NormalInvChisq(BaselineG0::new(10.0, 0.4, 0.0, 1.6).unwrap());
        let d = DrawRecord {
            iter: 0,
            fit: vec![],
            errors: ErrorDraw::Clusters {
                clusters: ClusterSnapshot {
                    thetas: vec![Theta { mu: 0.0, sigma: 1.0 }],
                    counts: vec![100],
                },
                alpha: 1e-12,
            },
        };
        let grid = linspace(-8.0, 8.0, 801);
        let s = predictive_error_density(std::slice::from_ref(&d), &grid, &base).unwrap();
        for (x, v) in grid.iter().zip(&s.mean) {
            assert!((v - normal_pdf(*x, 0.0, 1.0)).abs() < 1e-12);
        }
        assert!(trapezoid(&grid, &s.mean) >= 0.999);
        assert!(predictive_error_density(&[d], &[], &base).is_err());
    }

    #[test]
    fn grid_spans_residuals_plus_sd() {
        let r = [-1.0, 0.0, 1.0];
        let g = density_grid(&r);
        assert_eq!(g.len(), DENSITY_GRID_POINTS);
        assert!((g[0] + 2.0).abs() < 1e-12 && (g[DENSITY_GRID_POINTS - 1] - 2.0).abs() < 1e-12);
    }

    struct StdNormal;
    impl ExactDensity for StdNormal {
        fn pdf(&self, x: f64) -> f64 {
            normal_pdf(x, 0.0, 1.0)
        }
        fn cdf(&self, x: f64) -> f64 {
            use statrs::distribution::{ContinuousCDF, Normal};
            Normal::new(0.0, 1.0).unwrap().cdf(x)
        }
    }

    #[test]
    fn l1_routes_agree_for_smooth_truth() {
        let grid = linspace(-4.0, 4.0, 2001);
        let est: Vec<f64> = grid.iter().map(|&x| normal_pdf(x, 0.3, 1.2)).collect();
        let truth: Vec<f64> = grid.iter().map(|&x| normal_pdf(x, 0.0, 1.0)).collect();
        let a = l1_distance(&grid, &est, &truth);
        let b = l1_to_truth(&grid, &est, &StdNormal);
        assert!((a - b).abs() < 1e-5, "{} {}", a, b);
        assert!(l1_to_truth(&grid, &truth, &StdNormal).abs() < 1e-5);
    }
}
