use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dpmbart_core::harness::{self, reproduce, ReproduceConfig};
use dpmbart_core::io::{self, load_run};
use dpmbart_core::{ChainConfig, Scenario, ScenarioKind};

mod config;

use config::{PriorArgs, RunArgs, DEFAULT_N};

#[derive(Debug, Parser)]
#[command(name = "dpmbart", version, about = "BART with Dirichlet process mixture errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a simulated scenario as CSV (columns x, y, f_true)
    Simulate(SimulateArgs),
    /// Run a chain and write fits.csv, density.csv, trace.csv and draws.json
    Fit(FitArgs),
    /// Rebuild fits.csv and density.csv from a saved draws.json
    Summarize(SummarizeArgs),
    /// Run all three simulated scenarios with both models and write a metrics report
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: ScenarioKind,
    #[arg(long, default_value_t = DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the final trees to trees.txt
    #[arg(long)]
    dump_trees: bool,
    /// Verify the cached fits against a full evaluation after every sweep
    #[arg(long)]
    check_cache: bool,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// draws.json written by `fit`, or the directory holding it
    #[arg(long)]
    run: PathBuf,
    /// Output directory [default: next to draws.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// JSON file with prior and chain options; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size per scenario [default: 2000]
    #[arg(long)]
    n: Option<usize>,
    /// Seed shared by every scenario [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Total MCMC iterations [default: 10000]
    #[arg(long)]
    iters: Option<usize>,
    /// Burn-in iterations [default: 5000]
    #[arg(long)]
    burn: Option<usize>,
    /// Comma-separated subset of t20, t3, loggamma
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<ScenarioKind>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Summarize(a) => summarize(a),
        Command::Reproduce(a) => run_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let sim = dpmbart_core::simulate(Scenario {
        kind: a.scenario,
        n: a.n,
        seed: a.seed,
    })?;
    let names = vec!["x".to_string()];
    match a.out {
        Some(path) => io::write_data_csv(&path, &sim.data, &names, Some(&sim.f_true))?,
        None => io::write_data(std::io::stdout().lock(), &sim.data, &names, Some(&sim.f_true))?,
    }
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let run = a.run.resolve()?;
    let out = run.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let problem = run.problem()?;
    let settings = run.prior.settings();
    let config = ChainConfig {
        check_cache: a.check_cache,
        ..run.chain(&ChainConfig::default())
    };
    config.validate()?;
    eprintln!(
        "fitting {} with m = {}, {} iterations ({} burn-in), seed {}",
        config.mode, settings.m, config.n_iter, config.n_burn, config.seed
    );
    let fitted = harness::fit(&problem, &settings, &config)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let saved = fitted.saved(&problem);
    let summary = harness::summarize(&saved)?;
    harness::write_outputs(&out, &saved, &summary)?;
    io::save_run(&out.join("draws.json"), &saved)?;
    std::fs::write(
        out.join("calibration.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "settings": settings,
            "sigma_hat": fitted.model.sigma_hat(),
            "sigma_prior": fitted.model.sigma_prior,
            "mu_prior": fitted.model.mu_prior,
            "tree_prior": fitted.model.tree_prior,
            "baseline": fitted.model.baseline,
            "alpha_min": fitted.model.alpha_prior.alpha_min,
            "alpha_max": fitted.model.alpha_prior.alpha_max,
            "least_squares": {
                "coefficients": fitted.model.least_squares.coefficients,
                "residual_sd": fitted.model.least_squares.residual_sd,
                "r_squared": fitted.model.least_squares.r_squared,
            },
        }))?,
    )?;
    if a.dump_trees {
        std::fs::write(out.join("trees.txt"), &fitted.chain.final_trees)?;
    }
    let mc = fitted.chain.move_counts;
    eprintln!(
        "births accepted {}/{}, deaths accepted {}/{}",
        mc.births_accepted, mc.births_proposed, mc.deaths_accepted, mc.deaths_proposed
    );
    if let Some(f) = &problem.f_true {
        eprintln!("rmse to true f: {:.4}", summary.fit.rmse(f));
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn draws_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("draws.json")
    } else {
        p.to_path_buf()
    }
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let path = draws_path(&a.run);
    let saved = load_run(&path).with_context(|| format!("loading {}", path.display()))?;
    let out = match a.out {
        Some(o) => o,
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let summary = harness::summarize(&saved)?;
    harness::write_outputs(&out, &saved, &summary)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn run_reproduce(a: ReproduceArgs) -> Result<()> {
    let file = match &a.config {
        Some(path) => config::read_config(path)?,
        None => RunArgs::default(),
    };
    if file.csv.is_some() || file.scenario.is_some() || file.mode.is_some() {
        bail!("reproduce runs the simulated scenarios with both models; csv, scenario and mode do not apply");
    }
    let defaults = ReproduceConfig::default();
    let cfg = ReproduceConfig {
        n: a.n.or(file.n).unwrap_or(defaults.n),
        n_iter: a.iters.or(file.iters).unwrap_or(defaults.n_iter),
        n_burn: a.burn.or(file.burn).unwrap_or(defaults.n_burn),
        seed: a.seed.or(file.seed).unwrap_or(defaults.seed),
        settings: a.prior.over(file.prior).settings(),
        scenarios: a.scenarios.unwrap_or(defaults.scenarios),
        out: Some(a.out.clone()),
    };
    std::fs::create_dir_all(&a.out)?;
    eprintln!(
        "reproducing {} scenario(s) at n = {}, {} iterations ({} burn-in)",
        cfg.scenarios.len(),
        cfg.n,
        cfg.n_iter,
        cfg.n_burn
    );
    let runs = reproduce(&cfg)?;
    println!(
        "{:<9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7}",
        "scenario", "rmse_dpm", "rmse_bart", "l1_dpm", "l1_bart", "l1_d_b", "w_dpm", "w_bart", "I_mean"
    );
    for r in &runs {
        let m = &r.metrics;
        println!(
            "{:<9} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7.2}",
            m.scenario.name(),
            m.rmse_dpmbart,
            m.rmse_bart,
            m.l1_dpmbart_true,
            m.l1_bart_true,
            m.l1_dpmbart_bart,
            m.width_dpmbart,
            m.width_bart,
            m.i_steady_mean
        );
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}
