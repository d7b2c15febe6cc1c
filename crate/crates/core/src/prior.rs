//! Prior families and their data-based default calibrations.

use serde::{Deserialize, Serialize};

use crate::data::sample_sd;
use crate::dist::{chi_squared_quantile, student_t_quantile};
use crate::dpm::ClusterCountModel;
use crate::error::{Error, Result};

pub const BART_NU: f64 = 3.0;
pub const BART_Q: f64 = 0.90;
pub const G0_NU: f64 = 10.0;
pub const G0_Q: f64 = 0.95;
pub const G0_KS: f64 = 10.0;
pub const ALPHA_I_MIN: usize = 1;
pub const ALPHA_PSI: f64 = 0.5;
pub const SPLIT_BASE: f64 = 0.95;
pub const SPLIT_POWER: f64 = 2.0;
pub const SHRINK_K: f64 = 2.0;
pub const NUM_TREES: usize = 200;
pub const NUM_CUT: usize = 100;
pub const ALPHA_GRID_SIZE: usize = 100;
/// Search range for matching the cluster-count mode is `[ALPHA_SEARCH_MIN, n]`.
pub const ALPHA_SEARCH_MIN: f64 = 1e-3;

/// Default upper cluster count, `floor(0.1 n)` but never below 2.
pub fn default_i_max(n: usize) -> usize {
    (n / 10).max(2)
}

/// Depth-dependent split probability `base * (1 + d)^-power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePrior {
    pub split_base: f64,
    pub split_power: f64,
}

impl Default for TreePrior {
    fn default() -> Self {
        Self {
            split_base: SPLIT_BASE,
            split_power: SPLIT_POWER,
        }
    }
}

impl TreePrior {
    pub fn new(split_base: f64, split_power: f64) -> Result<Self> {
        if !(split_base > 0.0 && split_base < 1.0) || !(split_power >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tree prior needs base in (0,1) and power >= 0, got ({}, {})",
                split_base, split_power
            )));
        }
        Ok(Self { split_base, split_power })
    }

    #[inline]
    pub fn split_prob(&self, depth: usize) -> f64 {
        self.split_base * (1.0 + depth as f64).powf(-self.split_power)
    }
}

/// Leaf means are iid `N(0, tau^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuPrior {
    pub tau: f64,
    pub shrink_k: f64,
    pub m: usize,
}

impl MuPrior {
    pub fn calibrate(y: &[f64], shrink_k: f64, m: usize) -> Result<Self> {
        Ok(Self {
            tau: calibrate_tau(y, shrink_k, m)?,
            shrink_k,
            m,
        })
    }
}

/// `tau = (max y - min y) / (2 k sqrt(m))`.
pub fn calibrate_tau(y: &[f64], shrink_k: f64, m: usize) -> Result<f64> {
    if m == 0 || !(shrink_k > 0.0) {
        return Err(Error::InvalidArgument("tau calibration needs m >= 1 and k > 0".into()));
    }
    let (lo, hi) = crate::data::min_max(y.iter().copied());
    if !(hi > lo) {
        return Err(Error::Calibration("response is constant".into()));
    }
    Ok((hi - lo) / (2.0 * shrink_k * (m as f64).sqrt()))
}

/// `sigma^2 ~ nu lambda / chi^2_nu` with `P(sigma < sigma_hat) = q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPrior {
    pub nu: f64,
    pub lambda: f64,
    pub sigma_hat: f64,
    pub q: f64,
}

impl SigmaPrior {
    pub fn calibrate(sigma_hat: f64, nu: f64, q: f64) -> Result<Self> {
        Ok(Self {
            nu,
            lambda: calibrate_lambda(sigma_hat, nu, q)?,
            sigma_hat,
            q,
        })
    }
}

/// Scale `lambda` placing the `q` quantile of the prior on `sigma` at
/// `sigma_hat`: `lambda = sigma_hat^2 * Q_{chi2_nu}(1 - q) / nu`.
pub fn calibrate_lambda(sigma_hat: f64, nu: f64, q: f64) -> Result<f64> {
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(Error::Calibration(format!(
            "sigma estimate must be positive, got {} (degenerate response?)",
            sigma_hat
        )));
    }
    if !(nu > 0.0) || !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("need nu > 0 and q in (0,1), got ({}, {})", nu, q)));
    }
    Ok(sigma_hat * sigma_hat * chi_squared_quantile(nu, 1.0 - q) / nu)
}

/// How the scale of the calibration residuals is summarised when fixing `k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum ResidualScale {
    #[default]
    Max,
    /// Quantile of `|e_i|`, `p` in (0,1].
    Quantile(f64),
}

/// Normal / inverse chi-square baseline over `(mu, sigma)`:
/// `sigma^2 ~ nu lambda / chi^2_nu`, `mu | sigma ~ N(mu0, sigma^2 / k0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineG0 {
    pub nu: f64,
    pub lambda: f64,
    pub mu0: f64,
    pub k0: f64,
    pub ks: f64,
}

impl BaselineG0 {
    pub fn new(nu: f64, lambda: f64, mu0: f64, k0: f64) -> Result<Self> {
        if !(nu > 0.0 && lambda > 0.0 && k0 > 0.0) || !mu0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "baseline needs nu, lambda, k0 > 0; got ({}, {}, {})",
                nu, lambda, k0
            )));
        }
        Ok(Self { nu, lambda, mu0, k0, ks: f64::NAN })
    }
}

/// Calibrates the baseline from pilot residuals: `lambda` from `sd(e)` as
/// for the BART sigma prior, then `k0` solves `scale(e) = ks sqrt(lambda / k0)`.
pub fn calibrate_g0(residuals: &[f64], nu: f64, q: f64, ks: f64, mu0: f64) -> Result<BaselineG0> {
    calibrate_g0_with(residuals, nu, q, ks, mu0, ResidualScale::Max)
}

pub fn calibrate_g0_with(
    residuals: &[f64],
    nu: f64,
    q: f64,
    ks: f64,
    mu0: f64,
    scale: ResidualScale,
) -> Result<BaselineG0> {
    if residuals.len() < 2 {
        return Err(Error::Calibration("need at least two residuals".into()));
    }
    if !(ks > 0.0) {
        return Err(Error::InvalidArgument(format!("ks must be positive, got {}", ks)));
    }
    let sd = sample_sd(residuals);
    if !(sd > 0.0) {
        return Err(Error::Calibration("calibration residuals are constant (exact fit?)".into()));
    }
    let lambda = calibrate_lambda(sd, nu, q)?;
    let spread = match scale {
        ResidualScale::Max => residuals.iter().fold(0.0f64, |a, e| a.max(e.abs())),
        ResidualScale::Quantile(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("residual quantile must be in (0,1], got {}", p)));
            }
            let mut abs: Vec<f64> = residuals.iter().map(|e| e.abs()).collect();
            abs.sort_by(f64::total_cmp);
            crate::dist::quantile_sorted(&abs, p)
        }
    };
    if !(spread > 0.0) {
        return Err(Error::Calibration("calibration residuals are all zero".into()));
    }
    Ok(BaselineG0 {
        nu,
        lambda,
        mu0,
        k0: ks * ks * lambda / (spread * spread),
        ks,
    })
}

/// Quantile of the marginal of `mu` under the baseline,
/// `mu0 + sqrt(lambda / k0) t_nu`.
pub fn marginal_mu_quantile(g0: &BaselineG0, p: f64) -> f64 {
    g0.mu0 + (g0.lambda / g0.k0).sqrt() * student_t_quantile(g0.nu, p)
}

/// Prior on the concentration `alpha`, tabulated on a grid:
/// `p(alpha) ∝ (1 - (alpha - alpha_min) / (alpha_max - alpha_min))^psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPrior {
    pub n: usize,
    pub i_min: usize,
    pub i_max: usize,
    pub psi: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub grid: Vec<f64>,
    /// Unnormalised prior weights on `grid`.
    pub weights: Vec<f64>,
}

impl AlphaPrior {
    pub fn weight(&self, alpha: f64) -> f64 {
        if self.alpha_max == self.alpha_min {
            return 1.0;
        }
        let t = ((alpha - self.alpha_min) / (self.alpha_max - self.alpha_min)).clamp(0.0, 1.0);
        (1.0 - t).powf(self.psi)
    }

    /// A prior putting all mass on one value.
    pub fn point(n: usize, alpha: f64) -> Self {
        Self {
            n,
            i_min: 1,
            i_max: n,
            psi: 1.0,
            alpha_min: alpha,
            alpha_max: alpha,
            grid: vec![alpha],
            weights: vec![1.0],
        }
    }

    /// Prior-weighted mean of the grid.
    pub fn prior_mean(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.grid.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() / total
    }
}

/// Matches `alpha_min` / `alpha_max` to the requested modes of the number of
/// clusters and tabulates the prior on a uniform grid.
pub fn calibrate_alpha_prior(n: usize, i_min: usize, i_max: usize, psi: f64) -> Result<AlphaPrior> {
    if i_min < 1 || i_max < i_min || i_max > n {
        return Err(Error::Calibration(format!(
            "need 1 <= i_min <= i_max <= n, got i_min={} i_max={} n={}",
            i_min, i_max, n
        )));
    }
    if !(psi > 0.0) {
        return Err(Error::InvalidArgument(format!("psi must be positive, got {}", psi)));
    }
    let model = ClusterCountModel::new(n);
    let alpha_min = alpha_for_mode(&model, i_min)?;
    let alpha_max = alpha_for_mode(&model, i_max)?;
    let grid: Vec<f64> = if alpha_max > alpha_min {
        let step = (alpha_max - alpha_min) / (ALPHA_GRID_SIZE - 1) as f64;
        (0..ALPHA_GRID_SIZE).map(|k| alpha_min + step * k as f64).collect()
    } else {
        vec![alpha_min]
    };
    let mut prior = AlphaPrior {
        n,
        i_min,
        i_max,
        psi,
        alpha_min,
        alpha_max,
        weights: Vec::new(),
        grid,
    };
    prior.weights = prior.grid.iter().map(|&a| prior.weight(a)).collect();
    if let Some(last) = prior.weights.last_mut() {
        if prior.grid.len() > 1 {
            *last = 0.0;
        }
    }
    Ok(prior)
}

/// Smallest `alpha` in the search range whose cluster-count mode is `target`,
/// found by bisection on `log alpha` (the mode is nondecreasing in `alpha`).
pub fn alpha_for_mode(model: &ClusterCountModel, target: usize) -> Result<f64> {
    let n = model.n();
    let mut lo = ALPHA_SEARCH_MIN;
    let mut hi = (n as f64).max(2.0 * ALPHA_SEARCH_MIN);
    let mode_lo = model.mode(lo);
    if mode_lo >= target {
        if mode_lo == target {
            return Ok(lo);
        }
        return Err(Error::Calibration(format!(
            "mode of the cluster count is already {} at alpha={}; cannot reach {}",
            mode_lo, lo, target
        )));
    }
    let mode_hi = model.mode(hi);
    if mode_hi < target {
        return Err(Error::Calibration(format!(
            "mode of the cluster count only reaches {} at alpha={} (n={}); cannot reach {}",
            mode_hi, hi, n, target
        )));
    }
    // invariant: mode(lo) < target <= mode(hi)
    while hi / lo > 1.0 + 1e-12 {
        let mid = (lo * hi).sqrt();
        if model.mode(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let found = model.mode(hi);
    if found != target {
        return Err(Error::Calibration(format!(
            "cluster-count mode jumps from {} to {} near alpha={}; {} is never the mode",
            model.mode(lo),
            found,
            hi,
            target
        )));
    }
    Ok(hi)
}
