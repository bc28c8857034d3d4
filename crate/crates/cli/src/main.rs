mod commands;
mod config;
mod data;
mod error;
mod report;

use clap::{Parser, Subcommand};
use config::{AnalysisConfig, CriterionValue};
use error::{CliError, CliResult};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mfpkit", version, about = "Regression model building with fractional polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Analysis configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// CSV data file; overrides `data` in the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Master seed for stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for report.txt and report.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    alpha_select: Option<f64>,

    #[arg(long, global = true)]
    alpha_fp: Option<f64>,

    /// "aic", "bic" or a significance level.
    #[arg(long, global = true)]
    criterion: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fit the configured model as given.
    Fit,
    /// Multivariable fractional polynomial model building.
    Mfp,
    /// Backward, forward or stepwise selection of linear terms.
    Select,
    /// Bootstrap or subsampling inclusion frequencies.
    Stability,
    /// Cross-validated shrinkage of a selected model.
    Shrink,
    /// Type I error of the minimum p-value cutpoint on null data.
    CutpointDemo,
    /// Generate a scenario dataset and optionally evaluate a procedure on it.
    Simulate,
}

const DEFAULT_OUT: &str = "mfpkit-out";

fn resolve(cli: &Cli) -> CliResult<AnalysisConfig> {
    let mut cfg = match &cli.config {
        Some(p) => AnalysisConfig::load(p)?,
        None => AnalysisConfig::default(),
    };
    if let Some(d) = &cli.data {
        cfg.data = Some(d.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(a) = cli.alpha_select {
        cfg.alpha_select = a;
    }
    if let Some(a) = cli.alpha_fp {
        cfg.alpha_fp = a;
    }
    if let Some(c) = &cli.criterion {
        cfg.criterion = CriterionValue::Name(c.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve(cli)?;
    if let Some(w) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let report = match cli.command {
        Command::Fit => commands::fit_command(&cfg)?,
        Command::Mfp => commands::mfp_command(&cfg)?,
        Command::Select => commands::select_command(&cfg)?,
        Command::Stability => commands::stability_command(&cfg)?,
        Command::Shrink => commands::shrink_command(&cfg)?,
        Command::CutpointDemo => commands::cutpoint_command(&cfg)?,
        Command::Simulate => commands::simulate_command(&cfg, &out)?,
    };
    report.write(&out)?;
    print!("{}", report.text());
    eprintln!("reports written to {}", out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("mfpkit: {e}");
        std::process::exit(e.exit_code());
    }
}
