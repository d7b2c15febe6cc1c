//! Model settings and the data-based calibration of every prior.

use serde::{Deserialize, Serialize};

use crate::data::{sample_sd, CutpointGrid, Dataset, LeastSquaresFit};
use crate::dpm::{Baseline, Theta};
use crate::error::{Error, Result};
use crate::prior::{self, AlphaPrior, MuPrior, ResidualScale, SigmaPrior, TreePrior};

/// Every tunable prior setting. Missing keys in a config file take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub nu_bart: f64,
    pub q_bart: f64,
    pub nu_g0: f64,
    pub q_g0: f64,
    pub ks: f64,
    pub mu0: f64,
    pub imin: usize,
    /// Defaults to `floor(0.1 n)` (at least 2).
    pub imax: Option<usize>,
    pub psi: f64,
    pub m: usize,
    pub shrink_k: f64,
    pub num_cut: usize,
    pub split_base: f64,
    pub split_power: f64,
    pub min_leaf: usize,
    /// Use `sd(y)` instead of the least-squares residual sd for `sigma_hat`.
    pub naive_sigma: bool,
    /// Multiplies `sd(y)` when `naive_sigma` is set.
    pub sigma_multiplier: f64,
    /// Fix `k0` from this quantile of `|e_i|` instead of the maximum.
    pub k0_quantile: Option<f64>,
    /// Plain BART only: hold sigma at this value instead of sampling it.
    pub fixed_sigma: Option<f64>,
    /// Replace the baseline by a point mass at `(0, sigma)`.
    pub point_mass_sigma: Option<f64>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            nu_bart: prior::BART_NU,
            q_bart: prior::BART_Q,
            nu_g0: prior::G0_NU,
            q_g0: prior::G0_Q,
            ks: prior::G0_KS,
            mu0: 0.0,
            imin: prior::ALPHA_I_MIN,
            imax: None,
            psi: prior::ALPHA_PSI,
            m: prior::NUM_TREES,
            shrink_k: prior::SHRINK_K,
            num_cut: prior::NUM_CUT,
            split_base: prior::SPLIT_BASE,
            split_power: prior::SPLIT_POWER,
            min_leaf: 0,
            naive_sigma: false,
            sigma_multiplier: 1.0,
            k0_quantile: None,
            fixed_sigma: None,
            point_mass_sigma: None,
        }
    }
}

/// Calibrated priors for one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub grid: CutpointGrid,
    pub tree_prior: TreePrior,
    pub mu_prior: MuPrior,
    pub sigma_prior: SigmaPrior,
    pub baseline: Baseline,
    pub alpha_prior: AlphaPrior,
    pub least_squares: LeastSquaresFit,
    pub min_leaf: usize,
    pub fixed_sigma: Option<f64>,
}

impl CalibratedModel {
    pub fn calibrate(data: &Dataset, settings: &ModelSettings) -> Result<Self> {
        let ls = LeastSquaresFit::fit(data)?;
        let sigma_hat = if settings.naive_sigma {
            sample_sd(data.y()) * settings.sigma_multiplier
        } else {
            ls.residual_sd
        };
        if !(sigma_hat > 1e-12 * (1.0 + sample_sd(data.y()))) {
            return Err(Error::Calibration(format!(
                "sigma estimate {} is degenerate (response exactly fit by the linear model?)",
                sigma_hat
            )));
        }
        let sigma_prior = SigmaPrior::calibrate(sigma_hat, settings.nu_bart, settings.q_bart)?;
        let baseline = match settings.point_mass_sigma {
            Some(sigma) if sigma > 0.0 => Baseline::PointMass(Theta { mu: 0.0, sigma }),
            Some(sigma) => {
                return Err(Error::InvalidArgument(format!("point-mass sigma must be positive, got {}", sigma)))
            }
            None => {
                let scale = settings.k0_quantile.map_or(ResidualScale::Max, ResidualScale::Quantile);
                Baseline::NormalInvChisq(prior::calibrate_g0_with(
                    &ls.residuals,
                    settings.nu_g0,
                    settings.q_g0,
                    settings.ks,
                    settings.mu0,
                    scale,
                )?)
            }
        };
        let n = data.n();
        let i_max = settings.imax.unwrap_or_else(|| prior::default_i_max(n)).min(n);
        let alpha_prior = prior::calibrate_alpha_prior(n, settings.imin, i_max.max(settings.imin), settings.psi)?;
        Ok(Self {
            grid: CutpointGrid::build(data, settings.num_cut)?,
            tree_prior: TreePrior::new(settings.split_base, settings.split_power)?,
            mu_prior: MuPrior::calibrate(data.y(), settings.shrink_k, settings.m)?,
            sigma_prior,
            baseline,
            alpha_prior,
            least_squares: ls,
            min_leaf: settings.min_leaf,
            fixed_sigma: settings.fixed_sigma,
        })
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_prior.sigma_hat
    }

    /// Starting error parameters: one cluster at `(mu0, sigma_hat)`.
    pub fn initial_theta(&self) -> Theta {
        match self.baseline {
            Baseline::PointMass(t) => t,
            Baseline::NormalInvChisq(g0) => Theta {
                mu: g0.mu0,
                sigma: self.sigma_hat(),
            },
        }
    }
}
