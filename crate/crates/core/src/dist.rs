//! Densities, quantiles and samplers shared by the kernels.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ChiSquared as ChiSq, ContinuousCDF, StudentsT};

pub use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    ln_normal_pdf(x, mean, sd).exp()
}

/// Log density of `center + scale * t_df` at `x`.
pub fn ln_student_t_pdf(x: f64, df: f64, center: f64, scale: f64) -> f64 {
    let z = (x - center) / scale;
    ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * std::f64::consts::PI).ln() - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

pub fn chi_squared_quantile(df: f64, p: f64) -> f64 {
    ChiSq::new(df).expect("positive degrees of freedom").inverse_cdf(p)
}

pub fn student_t_quantile(df: f64, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").inverse_cdf(p)
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws `σ²` from the scaled inverse chi-square `df·scale / χ²_df`.
pub fn scaled_inv_chi_squared<R: Rng + ?Sized>(rng: &mut R, df: f64, scale: f64) -> f64 {
    let chi = ChiSquared::new(df).expect("positive degrees of freedom");
    df * scale / chi.sample(rng)
}

/// Natural log of `sum(exp(v))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Samples an index proportionally to `exp(log_weights)`.
pub fn sample_log_weights<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Option<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (k, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > 0.0 {
            last = Some(k);
            if u < p {
                return Some(k);
            }
            u -= p;
        }
    }
    last
}

/// Linearly interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_density_matches_normal_for_large_df() {
        let a = ln_student_t_pdf(0.7, 1e7, 0.1, 1.3).exp();
        let b = normal_pdf(0.7, 0.1, 1.3);
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn cauchy_density() {
        let v = ln_student_t_pdf(1.0, 1.0, 0.0, 1.0).exp();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert!((quantile_sorted(&s, 0.125) - 1.5).abs() < 1e-15);
    }
}
