//! The DPMBART Gibbs sampler and its plain-BART reduction.
//!
//! One DPMBART iteration runs three blocks:
//! 1. the trees given `theta`, by backfitting `y_i - mu_i` with variances `sigma_i^2`;
//! 2. `theta` given the trees, by Escobar–West draws (a) and (b) on `e_i = y_i - f(x_i)`;
//! 3. `alpha` given the number of distinct `theta`, on a grid.
//!
//! Tree moves and error-model draws use separate random streams, so two
//! chains that see identical error parameters make identical tree moves.

use serde::{Deserialize, Serialize};

use crate::bart::{draw_sigma_bart, Backfitter, MoveCounts, MoveOutcome, TreeUpdatePriors};
use crate::data::{Dataset, PerObsErrorParams};
use crate::dpm::{draw_alpha, ew_draw_a, ew_draw_b, ClusterCountModel, ClusterSnapshot, ClusterState};
use crate::error::{Error, Result};
use crate::model::CalibratedModel;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PlainBart,
    Dpmbart,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain_bart" | "bart" => Ok(Mode::PlainBart),
            "dpmbart" => Ok(Mode::Dpmbart),
            other => Err(Error::InvalidArgument(format!("unknown mode `{}`", other))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::PlainBart => "plain_bart",
            Mode::Dpmbart => "dpmbart",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub keep_every: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Added to every stream id; lets a companion chain share a seed.
    pub stream_offset: u64,
    /// Verify the fit cache against a full evaluation after every sweep.
    pub check_cache: bool,
    /// Record every birth/death outcome.
    pub record_moves: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 10_000,
            n_burn: 5_000,
            keep_every: 1,
            seed: 1,
            mode: Mode::Dpmbart,
            stream_offset: 0,
            check_cache: false,
            record_moves: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::InvalidArgument(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.n_burn, self.n_iter
            )));
        }
        if self.keep_every == 0 {
            return Err(Error::InvalidArgument("keep_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Error-model part of a kept draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDraw {
    Sigma(f64),
    Clusters { clusters: ClusterSnapshot, alpha: f64 },
}

/// One kept draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub iter: usize,
    /// `f^d(x_i)` on the original response scale.
    pub fit: Vec<f64>,
    pub errors: ErrorDraw,
}

/// Per-iteration scalars. Row 0 is the starting state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub sigma: Option<f64>,
    pub i_unique: Option<usize>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub mode: Mode,
    pub draws: Vec<DrawRecord>,
    pub trace: Vec<TraceRow>,
    pub move_counts: MoveCounts,
    pub move_log: Option<Vec<MoveOutcome>>,
    pub final_trees: String,
}

impl ChainOutput {
    pub fn sigmas(&self) -> Vec<f64> {
        self.draws
            .iter()
            .filter_map(|d| match d.errors {
                ErrorDraw::Sigma(s) => Some(s),
                ErrorDraw::Clusters { .. } => None,
            })
            .collect()
    }
}

fn check_finite(fit: &[f64], iter: usize) -> Result<()> {
    match fit.iter().position(|f| !f.is_finite()) {
        Some(i) => Err(Error::NonFinite {
            iter,
            reason: format!("fitted value for observation {} is {}", i, fit[i]),
        }),
        None => Ok(()),
    }
}

/// Runs one chain and returns the kept draws after burn-in.
pub fn run_chain(data: &Dataset, config: &ChainConfig, model: &CalibratedModel) -> Result<ChainOutput> {
    config.validate()?;
    let n = data.n();
    let mut tree_rng = stream(config.seed, Stream::Trees as u64 + config.stream_offset);
    let mut err_rng = stream(config.seed, Stream::Errors as u64 + config.stream_offset);
    let priors = TreeUpdatePriors {
        tree: model.tree_prior,
        tau: model.mu_prior.tau,
        min_leaf: model.min_leaf,
    };
    let mut backfit = Backfitter::new(data, model.mu_prior.m)?;
    if config.record_moves {
        backfit.move_log = Some(Vec::new());
    }
    let y = data.y();
    let y_mean = data.y_mean();
    let mut residuals = vec![0.0; n];
    let mut draws = Vec::new();
    let mut trace = Vec::with_capacity(config.n_iter + 1);
    let keep = |it: usize| it >= config.n_burn && (it - config.n_burn).is_multiple_of(config.keep_every);

    match config.mode {
        Mode::PlainBart => {
            let sp = model.sigma_prior;
            let mut sigma = model.fixed_sigma.unwrap_or(sp.sigma_hat);
            trace.push(TraceRow {
                iter: 0,
                sigma: Some(sigma),
                i_unique: None,
                alpha: None,
            });
            for it in 0..config.n_iter {
                let theta = PerObsErrorParams::homoscedastic(n, 0.0, sigma);
                backfit.sweep(data, &model.grid, &theta, &priors, &mut tree_rng)?;
                if config.check_cache {
                    backfit.check_cache(data, 1e-10)?;
                }
                check_finite(backfit.fit(), it + 1)?;
                for (r, (yi, fi)) in residuals.iter_mut().zip(y.iter().zip(backfit.fit())) {
                    *r = yi - fi;
                }
                if model.fixed_sigma.is_none() {
                    sigma = draw_sigma_bart(&residuals, sp.nu, sp.lambda, &mut err_rng);
                }
                trace.push(TraceRow {
                    iter: it + 1,
                    sigma: Some(sigma),
                    i_unique: None,
                    alpha: None,
                });
                if keep(it) {
                    draws.push(DrawRecord {
                        iter: it + 1,
                        fit: backfit.fit().iter().map(|f| f + y_mean).collect(),
                        errors: ErrorDraw::Sigma(sigma),
                    });
                }
            }
        }
        Mode::Dpmbart => {
            let count_model = ClusterCountModel::new(n);
            let mut state = ClusterState::single(n, model.initial_theta());
            let mut alpha = model.alpha_prior.prior_mean();
            trace.push(TraceRow {
                iter: 0,
                sigma: None,
                i_unique: Some(state.i_unique()),
                alpha: Some(alpha),
            });
            for it in 0..config.n_iter {
                let theta = state.per_obs();
                backfit.sweep(data, &model.grid, &theta, &priors, &mut tree_rng)?;
                if config.check_cache {
                    backfit.check_cache(data, 1e-10)?;
                }
                check_finite(backfit.fit(), it + 1)?;
                for (r, (yi, fi)) in residuals.iter_mut().zip(y.iter().zip(backfit.fit())) {
                    *r = yi - fi;
                }
                ew_draw_a(&residuals, &mut state, alpha, &model.baseline, &mut err_rng)?;
                ew_draw_b(&residuals, &mut state, &model.baseline, &mut err_rng)?;
                alpha = draw_alpha(state.i_unique(), &model.alpha_prior, &count_model, &mut err_rng)?;
                trace.push(TraceRow {
                    iter: it + 1,
                    sigma: None,
                    i_unique: Some(state.i_unique()),
                    alpha: Some(alpha),
                });
                if keep(it) {
                    draws.push(DrawRecord {
                        iter: it + 1,
                        fit: backfit.fit().iter().map(|f| f + y_mean).collect(),
                        errors: ErrorDraw::Clusters {
                            clusters: state.snapshot(),
                            alpha,
                        },
                    });
                }
            }
        }
    }
    Ok(ChainOutput {
        mode: config.mode,
        draws,
        trace,
        move_counts: backfit.counts,
        move_log: backfit.move_log.take(),
        final_trees: backfit.ensemble().to_text(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSettings;
    use crate::scenario::{simulate, Scenario, ScenarioKind};

    fn small() -> (Dataset, CalibratedModel) {
        let sim = simulate(Scenario {
            kind: ScenarioKind::T20,
            n: 40,
            seed: 3,
        })
        .unwrap();
        let settings = ModelSettings {
            m: 10,
            ..ModelSettings::default()
        };
        let model = CalibratedModel::calibrate(&sim.data, &settings).unwrap();
        (sim.data, model)
    }

    fn config(mode: Mode) -> ChainConfig {
        ChainConfig {
            n_iter: 60,
            n_burn: 20,
            keep_every: 4,
            seed: 9,
            mode,
            check_cache: true,
            ..ChainConfig::default()
        }
    }

    #[test]
    fn burn_in_must_leave_draws() {
        let bad = ChainConfig {
            n_iter: 10,
            n_burn: 10,
            ..ChainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ChainConfig {
            keep_every: 0,
            ..ChainConfig::default()
        };
        assert!(bad.validate().is_err());
        let (data, model) = small();
        assert!(run_chain(
            &data,
            &ChainConfig {
                n_iter: 5,
                n_burn: 7,
                ..ChainConfig::default()
            },
            &model
        )
        .is_err());
    }

    #[test]
    fn draws_and_trace_shapes() {
        let (data, model) = small();
        for mode in [Mode::PlainBart, Mode::Dpmbart] {
            let out = run_chain(&data, &config(mode), &model).unwrap();
            assert_eq!(out.trace.len(), 61);
            assert_eq!(out.trace[0].iter, 0);
            assert_eq!(out.draws.len(), 10);
            assert_eq!(out.draws[0].iter, 21);
            assert!(out.draws.iter().all(|d| d.fit.len() == 40 && d.fit.iter().all(|f| f.is_finite())));
            match mode {
                Mode::PlainBart => {
                    assert!(out.trace.iter().all(|r| r.sigma.is_some() && r.i_unique.is_none()));
                    assert_eq!(out.sigmas().len(), 10);
                }
                Mode::Dpmbart => {
                    assert_eq!(out.trace[0].i_unique, Some(1));
                    assert!(out.trace.iter().all(|r| r.sigma.is_none() && r.alpha.is_some()));
                    assert!(out.sigmas().is_empty());
                }
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_draws() {
        let (data, model) = small();
        for mode in [Mode::PlainBart, Mode::Dpmbart] {
            let a = run_chain(&data, &config(mode), &model).unwrap();
            let b = run_chain(&data, &config(mode), &model).unwrap();
            assert_eq!(a.draws, b.draws);
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.final_trees, b.final_trees);
            let c = run_chain(&data, &ChainConfig { seed: 10, ..config(mode) }, &model).unwrap();
            assert_ne!(a.draws, c.draws);
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [Mode::PlainBart, Mode::Dpmbart] {
            assert_eq!(mode.to_string().parse::<Mode>().unwrap(), mode);
        }
        assert_eq!("bart".parse::<Mode>().unwrap(), Mode::PlainBart);
        assert!("dpm".parse::<Mode>().is_err());
    }
}
