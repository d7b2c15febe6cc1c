//! Run configuration shared by the command line and JSON config files.
//!
//! Every field is optional so a config file and the flags can be layered:
//! values given on the command line replace those from the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use dpmbart_core::harness::Problem;
use dpmbart_core::io::load_csv;
use dpmbart_core::{ChainConfig, Mode, ModelSettings, Scenario, ScenarioKind};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct PriorArgs {
    /// Degrees of freedom of the BART sigma prior
    #[arg(long, alias = "nu_bart")]
    pub nu_bart: Option<f64>,
    /// Prior probability that sigma is below the calibration estimate
    #[arg(long, alias = "q_bart")]
    pub q_bart: Option<f64>,
    /// Degrees of freedom of the baseline sigma prior
    #[arg(long, alias = "nu_g0")]
    pub nu_g0: Option<f64>,
    #[arg(long, alias = "q_g0")]
    pub q_g0: Option<f64>,
    /// Scaling of the baseline mean spread
    #[arg(long)]
    pub ks: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    /// Cluster count that sets the lower end of the alpha grid
    #[arg(long)]
    pub imin: Option<usize>,
    /// Cluster count that sets the upper end of the alpha grid [default: n/10]
    #[arg(long)]
    pub imax: Option<usize>,
    #[arg(long)]
    pub psi: Option<f64>,
    /// Number of trees
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, alias = "shrink_k")]
    pub shrink_k: Option<f64>,
    /// Cutpoints per predictor
    #[arg(long, alias = "num_cut")]
    pub num_cut: Option<usize>,
    #[arg(long, alias = "split_base")]
    pub split_base: Option<f64>,
    #[arg(long, alias = "split_power")]
    pub split_power: Option<f64>,
    /// Use this quantile of |e| instead of the maximum when setting k0
    #[arg(long, alias = "k0_quantile")]
    pub k0_quantile: Option<f64>,
    /// Calibrate sigma from sd(y) instead of the least-squares residuals
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub naive: Option<bool>,
    /// Multiplier applied to sd(y) with --naive
    #[arg(long, alias = "sigma_multiplier")]
    pub sigma_multiplier: Option<f64>,
    /// Reject births that leave fewer observations in a child
    #[arg(long, alias = "min_leaf")]
    pub min_leaf: Option<usize>,
}

impl PriorArgs {
    /// Fields set here replace those of `base`.
    pub fn over(self, base: PriorArgs) -> PriorArgs {
        PriorArgs {
            nu_bart: self.nu_bart.or(base.nu_bart),
            q_bart: self.q_bart.or(base.q_bart),
            nu_g0: self.nu_g0.or(base.nu_g0),
            q_g0: self.q_g0.or(base.q_g0),
            ks: self.ks.or(base.ks),
            mu0: self.mu0.or(base.mu0),
            imin: self.imin.or(base.imin),
            imax: self.imax.or(base.imax),
            psi: self.psi.or(base.psi),
            m: self.m.or(base.m),
            shrink_k: self.shrink_k.or(base.shrink_k),
            num_cut: self.num_cut.or(base.num_cut),
            split_base: self.split_base.or(base.split_base),
            split_power: self.split_power.or(base.split_power),
            k0_quantile: self.k0_quantile.or(base.k0_quantile),
            naive: self.naive.or(base.naive),
            sigma_multiplier: self.sigma_multiplier.or(base.sigma_multiplier),
            min_leaf: self.min_leaf.or(base.min_leaf),
        }
    }

    pub fn settings(&self) -> ModelSettings {
        let d = ModelSettings::default();
        ModelSettings {
            nu_bart: self.nu_bart.unwrap_or(d.nu_bart),
            q_bart: self.q_bart.unwrap_or(d.q_bart),
            nu_g0: self.nu_g0.unwrap_or(d.nu_g0),
            q_g0: self.q_g0.unwrap_or(d.q_g0),
            ks: self.ks.unwrap_or(d.ks),
            mu0: self.mu0.unwrap_or(d.mu0),
            imin: self.imin.unwrap_or(d.imin),
            imax: self.imax.or(d.imax),
            psi: self.psi.unwrap_or(d.psi),
            m: self.m.unwrap_or(d.m),
            shrink_k: self.shrink_k.unwrap_or(d.shrink_k),
            num_cut: self.num_cut.unwrap_or(d.num_cut),
            split_base: self.split_base.unwrap_or(d.split_base),
            split_power: self.split_power.unwrap_or(d.split_power),
            min_leaf: self.min_leaf.unwrap_or(d.min_leaf),
            naive_sigma: self.naive.unwrap_or(d.naive_sigma),
            sigma_multiplier: self.sigma_multiplier.unwrap_or(d.sigma_multiplier),
            k0_quantile: self.k0_quantile.or(d.k0_quantile),
            ..d
        }
    }
}

/// Input source, chain settings and output directory.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct RunArgs {
    /// JSON file with any of these options; flags take precedence
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Simulated scenario to fit (t20, t3 or loggamma)
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    /// Sample size for a simulated scenario
    #[arg(long)]
    pub n: Option<usize>,
    /// CSV file with a header row
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Response column of the CSV
    #[arg(long)]
    pub y: Option<String>,
    /// Comma-separated predictor columns [default: all but the response]
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total MCMC iterations
    #[arg(long)]
    pub iters: Option<usize>,
    /// Burn-in iterations
    #[arg(long)]
    pub burn: Option<usize>,
    /// Keep every k-th post-burn draw
    #[arg(long, alias = "keep_every")]
    pub keep_every: Option<usize>,
    /// plain_bart or dpmbart
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
}

impl RunArgs {
    /// Merges in the config file named by `--config`, if any.
    pub fn resolve(self) -> Result<RunArgs> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_config(&path)?;
        Ok(RunArgs {
            config: self.config,
            scenario: self.scenario.or(file.scenario),
            n: self.n.or(file.n),
            csv: self.csv.or(file.csv),
            y: self.y.or(file.y),
            x: self.x.or(file.x),
            seed: self.seed.or(file.seed),
            iters: self.iters.or(file.iters),
            burn: self.burn.or(file.burn),
            keep_every: self.keep_every.or(file.keep_every),
            mode: self.mode.or(file.mode),
            out: self.out.or(file.out),
            prior: self.prior.over(file.prior),
        })
    }

    pub fn chain(&self, defaults: &ChainConfig) -> ChainConfig {
        ChainConfig {
            n_iter: self.iters.unwrap_or(defaults.n_iter),
            n_burn: self.burn.unwrap_or(defaults.n_burn),
            keep_every: self.keep_every.unwrap_or(defaults.keep_every),
            seed: self.seed.unwrap_or(defaults.seed),
            mode: self.mode.unwrap_or(defaults.mode),
            ..defaults.clone()
        }
    }

    /// Loads the CSV or simulates the scenario; exactly one must be given.
    pub fn problem(&self) -> Result<Problem> {
        match (&self.csv, self.scenario) {
            (Some(_), Some(_)) => bail!("give either --csv or --scenario, not both"),
            (None, None) => bail!("an input is required: --csv PATH --y COL, or --scenario KIND"),
            (Some(path), None) => {
                let y = self.y.as_deref().context("--y is required with --csv")?;
                let loaded = load_csv(path, y, self.x.as_deref()).with_context(|| format!("loading {}", path.display()))?;
                report_least_squares(&loaded);
                Ok(Problem {
                    data: loaded.data,
                    x_names: loaded.x_names,
                    f_true: None,
                    truth: None,
                })
            }
            (None, Some(kind)) => Ok(Problem::from_scenario(Scenario {
                kind,
                n: self.n.unwrap_or(DEFAULT_N),
                seed: self.seed.unwrap_or(1),
            })?),
        }
    }
}

pub const DEFAULT_N: usize = 2000;

fn report_least_squares(loaded: &dpmbart_core::io::LoadedCsv) {
    let ls = &loaded.least_squares;
    eprintln!("n = {}, p = {}", loaded.data.n(), loaded.data.p());
    eprintln!("least squares of {} on the predictors:", loaded.y_name);
    eprintln!("  {:<16} {:>12.5}", "(intercept)", ls.coefficients[0]);
    for (name, b) in loaded.x_names.iter().zip(&ls.coefficients[1..]) {
        eprintln!("  {:<16} {:>12.5}", name, b);
    }
    eprintln!("  residual sd {:.5}, R^2 {:.4}", ls.residual_sd, ls.r_squared);
}

/// Config keys are the flag names with underscores.
pub fn read_config(path: &Path) -> Result<RunArgs> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Some(map) = value.as_object() else {
        bail!("config {} must be a JSON object", path.display());
    };
    let cmd = RunArgs::augment_args(clap::Command::new("config"));
    for key in map.keys() {
        if key == "config" || !cmd.get_arguments().any(|a| a.get_id() == key.as_str()) {
            bail!("unknown key `{}` in config {}", key, path.display());
        }
    }
    serde_json::from_value(value).with_context(|| format!("parsing config {}", path.display()))
}
