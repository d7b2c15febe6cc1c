//! End-to-end runs: fit with summaries, and the three-scenario reproduction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::{self, DensityTable, SavedRun};
use crate::model::{CalibratedModel, ModelSettings};
use crate::rng::Stream;
use crate::sampler::{run_chain, ChainConfig, ChainOutput, Mode, TraceRow};
use crate::scenario::{simulate, Scenario, ScenarioKind, TrueErrorDensity};
use crate::summary::{
    bart_average_density, density_grid, l1_distance, l1_to_truth, predictive_error_density, summarize_fit,
    DensitySummary, FitSummary,
};

/// A dataset with optional known truth.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: Dataset,
    pub x_names: Vec<String>,
    pub f_true: Option<Vec<f64>>,
    pub truth: Option<TrueErrorDensity>,
}

impl Problem {
    pub fn from_scenario(scenario: Scenario) -> Result<Self> {
        let sim = simulate(scenario)?;
        Ok(Self {
            data: sim.data,
            x_names: vec!["x".into()],
            f_true: Some(sim.f_true),
            truth: Some(sim.truth),
        })
    }
}

pub fn default_x_names(p: usize) -> Vec<String> {
    if p == 1 {
        vec!["x".into()]
    } else {
        (1..=p).map(|j| format!("x{}", j)).collect()
    }
}

/// Fitted chain plus, in DPMBART mode, a plain-BART companion chain whose
/// sigma draws give the `bart_mean` density column.
pub struct FitRun {
    pub model: CalibratedModel,
    pub chain: ChainOutput,
    pub companion: Option<ChainOutput>,
}

pub fn fit(problem: &Problem, settings: &ModelSettings, config: &ChainConfig) -> Result<FitRun> {
    let model = CalibratedModel::calibrate(&problem.data, settings)?;
    let chain = run_chain(&problem.data, config, &model)?;
    let companion = match config.mode {
        Mode::Dpmbart => {
            let cfg = ChainConfig {
                mode: Mode::PlainBart,
                stream_offset: config.stream_offset + Stream::Companion as u64,
                record_moves: false,
                ..config.clone()
            };
            Some(run_chain(&problem.data, &cfg, &model)?)
        }
        Mode::PlainBart => None,
    };
    Ok(FitRun {
        model,
        chain,
        companion,
    })
}

impl FitRun {
    pub fn saved(&self, problem: &Problem) -> SavedRun {
        SavedRun {
            mode: self.chain.mode,
            x_names: problem.x_names.clone(),
            data: problem.data.clone(),
            f_true: problem.f_true.clone(),
            truth: problem.truth,
            baseline: self.model.baseline,
            draws: self.chain.draws.clone(),
            trace: self.chain.trace.clone(),
            companion_sigmas: self.companion.as_ref().map(ChainOutput::sigmas),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub fit: FitSummary,
    pub density: DensityTable,
}

/// Rebuilds fit and density summaries from saved draws.
pub fn summarize(run: &SavedRun) -> Result<RunSummary> {
    let fit = summarize_fit(&run.draws)?;
    let y = run.data.y_original();
    let residuals: Vec<f64> = y.iter().zip(&fit.fhat).map(|(y, f)| y - f).collect();
    let grid = density_grid(&residuals);
    let dpm = match run.mode {
        Mode::Dpmbart => Some(predictive_error_density(&run.draws, &grid, &run.baseline)?),
        Mode::PlainBart => None,
    };
    let sigmas = match run.mode {
        Mode::PlainBart => Some(
            run.draws
                .iter()
                .filter_map(|d| match d.errors {
                    crate::sampler::ErrorDraw::Sigma(s) => Some(s),
                    _ => None,
                })
                .collect::<Vec<f64>>(),
        ),
        Mode::Dpmbart => run.companion_sigmas.clone(),
    };
    let bart_mean = sigmas.filter(|s| !s.is_empty()).map(|s| bart_average_density(&s, &grid));
    Ok(RunSummary {
        fit,
        density: DensityTable::new(grid, dpm, bart_mean, run.truth.as_ref()),
    })
}

/// Writes `fits.csv`, `density.csv` and `trace.csv` into `dir`.
pub fn write_outputs(dir: &Path, run: &SavedRun, summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_fits_csv(&dir.join("fits.csv"), &run.data, &run.x_names, &summary.fit, run.f_true.as_deref())?;
    io::write_density_csv(&dir.join("density.csv"), &summary.density)?;
    io::write_trace_csv(&dir.join("trace.csv"), run.mode, &run.trace)?;
    Ok(())
}

/// First iteration whose cluster count reaches the lower edge of the steady
/// band (5% quantile of post-burn `I`), and the post-burn mean of `I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSteadyState {
    pub band_lo: f64,
    pub band_hi: f64,
    pub mean: f64,
    pub first_iter_in_band: Option<usize>,
}

pub fn steady_state(trace: &[TraceRow], n_burn: usize) -> Option<TraceSteadyState> {
    let mut post: Vec<f64> = trace
        .iter()
        .filter(|r| r.iter > n_burn)
        .filter_map(|r| r.i_unique.map(|i| i as f64))
        .collect();
    if post.is_empty() {
        return None;
    }
    let mean = post.iter().sum::<f64>() / post.len() as f64;
    post.sort_by(f64::total_cmp);
    let band_lo = crate::dist::quantile_sorted(&post, 0.05);
    let band_hi = crate::dist::quantile_sorted(&post, 0.95);
    let first_iter_in_band = trace
        .iter()
        .find(|r| r.i_unique.is_some_and(|i| i as f64 >= band_lo))
        .map(|r| r.iter);
    Some(TraceSteadyState {
        band_lo,
        band_hi,
        mean,
        first_iter_in_band,
    })
}

#[derive(Debug, Clone)]
pub struct ReproduceConfig {
    pub n: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub seed: u64,
    pub settings: ModelSettings,
    pub scenarios: Vec<ScenarioKind>,
    pub out: Option<PathBuf>,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            n_iter: 10_000,
            n_burn: 5_000,
            seed: 1,
            settings: ModelSettings::default(),
            scenarios: ScenarioKind::ALL.to_vec(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub rmse_dpmbart: f64,
    pub rmse_bart: f64,
    pub l1_dpmbart_true: f64,
    pub l1_bart_true: f64,
    pub l1_dpmbart_bart: f64,
    pub width_dpmbart: f64,
    pub width_bart: f64,
    pub coverage_dpmbart: f64,
    pub coverage_bart: f64,
    pub i_max: usize,
    pub i_steady_mean: f64,
    pub i_band_lo: f64,
    pub i_band_hi: f64,
    pub first_iter_in_band: Option<usize>,
}

/// In-memory result of one reproduced scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub problem: Problem,
    pub dpm: SavedRun,
    pub bart: SavedRun,
    pub dpm_summary: RunSummary,
    pub bart_summary: RunSummary,
    pub density: DensityTable,
    pub metrics: ScenarioMetrics,
}

fn run_scenario(kind: ScenarioKind, cfg: &ReproduceConfig) -> Result<ScenarioRun> {
    let problem = Problem::from_scenario(Scenario {
        kind,
        n: cfg.n,
        seed: cfg.seed,
    })?;
    let model = CalibratedModel::calibrate(&problem.data, &cfg.settings)?;
    let chain_cfg = |mode| ChainConfig {
        n_iter: cfg.n_iter,
        n_burn: cfg.n_burn,
        seed: cfg.seed,
        mode,
        ..ChainConfig::default()
    };
    let (dpm_chain, bart_chain) = std::thread::scope(|s| {
        let dpm = s.spawn(|| run_chain(&problem.data, &chain_cfg(Mode::Dpmbart), &model));
        let bart = run_chain(&problem.data, &chain_cfg(Mode::PlainBart), &model);
        (dpm.join().expect("chain thread panicked"), bart)
    });
    let (dpm_chain, bart_chain) = (dpm_chain?, bart_chain?);
    let saved = |chain: &ChainOutput, companion: Option<Vec<f64>>| SavedRun {
        mode: chain.mode,
        x_names: problem.x_names.clone(),
        data: problem.data.clone(),
        f_true: problem.f_true.clone(),
        truth: problem.truth,
        baseline: model.baseline,
        draws: chain.draws.clone(),
        trace: chain.trace.clone(),
        companion_sigmas: companion,
    };
    let dpm = saved(&dpm_chain, Some(bart_chain.sigmas()));
    let bart = saved(&bart_chain, None);
    let dpm_summary = summarize(&dpm)?;
    let bart_summary = summarize(&bart)?;
    let density = dpm_summary.density.clone();
    let truth = problem.truth.expect("simulated truth");
    let f_true = problem.f_true.as_deref().expect("simulated f");
    let grid = &density.grid;
    let dpm_mean = &density.dpm.as_ref().expect("mixture density").mean;
    let bart_mean = density.bart_mean.as_ref().expect("companion density");
    let steady = steady_state(&dpm.trace, cfg.n_burn).ok_or_else(|| Error::Invariant("empty trace".into()))?;
    let metrics = ScenarioMetrics {
        scenario: kind,
        n: cfg.n,
        rmse_dpmbart: dpm_summary.fit.rmse(f_true),
        rmse_bart: bart_summary.fit.rmse(f_true),
        l1_dpmbart_true: l1_to_truth(grid, dpm_mean, &truth),
        l1_bart_true: l1_to_truth(grid, bart_mean, &truth),
        l1_dpmbart_bart: l1_distance(grid, dpm_mean, bart_mean),
        width_dpmbart: dpm_summary.fit.mean_width(),
        width_bart: bart_summary.fit.mean_width(),
        coverage_dpmbart: dpm_summary.fit.coverage(f_true),
        coverage_bart: bart_summary.fit.coverage(f_true),
        i_max: model.alpha_prior.i_max,
        i_steady_mean: steady.mean,
        i_band_lo: steady.band_lo,
        i_band_hi: steady.band_hi,
        first_iter_in_band: steady.first_iter_in_band,
    };
    Ok(ScenarioRun {
        problem,
        dpm,
        bart,
        dpm_summary,
        bart_summary,
        density,
        metrics,
    })
}

/// Runs every configured scenario in parallel and, with an output directory,
/// writes `<out>/<scenario>/{data.csv, density.csv, dpmbart/, plain_bart/}`
/// plus `metrics.json` and `metrics.csv`.
pub fn reproduce(cfg: &ReproduceConfig) -> Result<Vec<ScenarioRun>> {
    if cfg.n_burn >= cfg.n_iter {
        return Err(Error::InvalidArgument(format!(
            "burn-in ({}) must be smaller than the number of iterations ({})",
            cfg.n_burn, cfg.n_iter
        )));
    }
    let runs: Vec<Result<ScenarioRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .scenarios
            .iter()
            .map(|&kind| s.spawn(move || run_scenario(kind, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let runs: Vec<ScenarioRun> = runs.into_iter().collect::<Result<_>>()?;
    if let Some(out) = &cfg.out {
        write_reproduction(out, &runs)?;
    }
    Ok(runs)
}

pub fn write_reproduction(out: &Path, runs: &[ScenarioRun]) -> Result<()> {
    for run in runs {
        let dir = out.join(run.metrics.scenario.name());
        std::fs::create_dir_all(&dir)?;
        io::write_data_csv(
            &dir.join("data.csv"),
            &run.problem.data,
            &run.problem.x_names,
            run.problem.f_true.as_deref(),
        )?;
        io::write_density_csv(&dir.join("density.csv"), &run.density)?;
        write_outputs(&dir.join("dpmbart"), &run.dpm, &run.dpm_summary)?;
        write_outputs(&dir.join("plain_bart"), &run.bart, &run.bart_summary)?;
    }
    let metrics: Vec<&ScenarioMetrics> = runs.iter().map(|r| &r.metrics).collect();
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean predictive density of the mixture chain, on its own grid.
pub fn mixture_density(run: &SavedRun) -> Result<DensitySummary> {
    let fit = summarize_fit(&run.draws)?;
    let y = run.data.y_original();
    let residuals: Vec<f64> = y.iter().zip(&fit.fhat).map(|(y, f)| y - f).collect();
    predictive_error_density(&run.draws, &density_grid(&residuals), &run.baseline)
}
