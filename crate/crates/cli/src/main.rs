//! Pipeline driver: synth, ingest, featurize, select, train, search,
//! predict, evaluate. One config file, flag overrides, a manifest per run.
//!
//! Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric error.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use yieldcast::error::{Error, Result};

#[derive(Parser)]
#[command(name = "yieldcast", version, about = "County corn-yield forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. --set seed=7. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Trend scheme: percentage or constant.
    #[arg(long)]
    trend: Option<String>,
    /// Base year yields are adjusted to.
    #[arg(long = "base-year")]
    base_year: Option<i32>,
    /// Feature set: best10, set15, set16, or all28.
    #[arg(long)]
    features: Option<String>,
    /// Combination augmentation: none, pairs, or pairs3.
    #[arg(long)]
    augment: Option<String>,
    /// Fail instead of skipping combinations with missing county-years.
    #[arg(long = "augment-strict")]
    augment_strict: bool,
    /// Missing-day handling: none or linear (interpolate gaps up to 3 days).
    #[arg(long)]
    impute: Option<String>,
}

impl Common {
    fn as_overrides(&self) -> Vec<String> {
        let mut out = self.overrides.clone();
        if let Some(v) = &self.trend {
            out.push(format!("trend={v}"));
        }
        if let Some(v) = self.base_year {
            out.push(format!("base_year={v}"));
        }
        if let Some(v) = &self.features {
            out.push(format!("features={v}"));
        }
        if let Some(v) = &self.augment {
            out.push(format!("augment={v}"));
        }
        if self.augment_strict {
            out.push("augment_strict=true".to_string());
        }
        if let Some(v) = &self.impute {
            out.push(format!("impute={v}"));
        }
        out
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a known ground truth.
    Synth(Common),
    /// Parse and validate the input CSVs.
    Ingest(Common),
    /// Build (and optionally augment) the featurized sample caches.
    Featurize(Common),
    /// Rank features by mRMR and emit the ranking CSV.
    Select(Common),
    /// Train one model with the configured hyperparameters.
    Train(Common),
    /// Random hyperparameter search.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel trial workers.
        #[arg(long)]
        jobs: Option<usize>,
        /// Record wall-clock seconds in the trial log (breaks byte-level
        /// reproducibility of the log).
        #[arg(long)]
        timings: bool,
    },
    /// Predict test-year yields from a checkpoint.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path (default: <out_dir>/checkpoint.yldc).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Data horizon: aug (T=122), sep (153), oct (183), final (214).
        #[arg(long)]
        month: Option<String>,
    },
    /// Compare predictions against observed yields and the USDA table.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Predictions CSV (default: <out_dir>/predictions.csv).
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn write_manifest(config: &RunConfig, command: &str, artifacts: &[PathBuf]) -> Result<()> {
    let dir = config.path("out_dir")?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut body = String::new();
    body.push_str(&format!("command={command}\n"));
    body.push_str(&format!("config_hash={:016x}\n", config.hash()));
    body.push_str(&format!("seed={}\n", config.u64_or("seed", 42)?));
    body.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    body.push_str("[config]\n");
    body.push_str(&config.canonical());
    body.push_str("[artifacts]\n");
    let mut names: Vec<String> = artifacts
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    names.sort();
    for n in names {
        body.push_str(&n);
        body.push('\n');
    }
    let path = dir.join(format!("manifest_{command}.txt"));
    std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn run(cli: Cli) -> Result<()> {
    let (name, common, extra): (&str, &Common, Vec<String>) = match &cli.command {
        Command::Synth(c) => ("synth", c, vec![]),
        Command::Ingest(c) => ("ingest", c, vec![]),
        Command::Featurize(c) => ("featurize", c, vec![]),
        Command::Select(c) => ("select", c, vec![]),
        Command::Train(c) => ("train", c, vec![]),
        Command::Search {
            common,
            trials,
            seed,
            jobs,
            timings,
        } => {
            let mut extra = Vec::new();
            if let Some(t) = trials {
                extra.push(format!("trials={t}"));
            }
            if let Some(s) = seed {
                extra.push(format!("seed={s}"));
            }
            if let Some(j) = jobs {
                extra.push(format!("jobs={j}"));
            }
            if *timings {
                extra.push("timings=true".to_string());
            }
            ("search", common, extra)
        }
        Command::Predict {
            common,
            model,
            month,
        } => {
            let mut extra = Vec::new();
            if let Some(m) = model {
                extra.push(format!("model={}", m.display()));
            }
            if let Some(m) = month {
                extra.push(format!("month={m}"));
            }
            ("predict", common, extra)
        }
        Command::Evaluate {
            common,
            predictions,
        } => {
            let mut extra = Vec::new();
            if let Some(p) = predictions {
                extra.push(format!("predictions={}", p.display()));
            }
            ("evaluate", common, extra)
        }
    };

    let mut overrides = common.as_overrides();
    overrides.extend(extra);
    let config = RunConfig::load(&common.config, &overrides)?;

    let artifacts = match name {
        "synth" => commands::cmd_synth(&config)?,
        "ingest" => commands::cmd_ingest(&config)?,
        "featurize" => commands::cmd_featurize(&config)?,
        "select" => commands::cmd_select(&config)?,
        "train" => commands::cmd_train(&config)?,
        "search" => commands::cmd_search(&config)?,
        "predict" => commands::cmd_predict(&config)?,
        "evaluate" => commands::cmd_evaluate(&config)?,
        _ => unreachable!(),
    };
    write_manifest(&config, name, &artifacts)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(exit_code(&err));
    }
}
