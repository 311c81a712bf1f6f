//! `murmur`: batch command-line front end for the murmur detection pipeline.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 internal error or
//! corrupt data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use murmur_core::config::RunConfig;
use murmur_core::model::Branches;
use murmur_core::Error;

#[derive(Debug, Parser)]
#[command(name = "murmur", version, about = "Heart murmur detection with a parallel CNN + BiLSTM")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Run configuration file of `key = value` lines; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base random seed [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for featurization [default: available cores].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every recording under a data root and write `<out>/manifest.csv`.
    Manifest {
        /// Dataset root [default: `data_root` from the config].
        #[arg(long)]
        root: Option<PathBuf>,
        /// TOML rules file mapping files to labels and subjects.
        #[arg(long)]
        rules: PathBuf,
    },
    /// Preprocess and featurize every recording of a manifest into the cache.
    Featurize {
        /// Manifest CSV [default: `<out>/manifest.csv`].
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Feature cache directory [default: `<out>/cache`].
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Cross-validate on the feature cache; writes reports and per-fold checkpoints.
    Train(TrainArgs),
    /// Render one or more metrics reports as a table (written to `<out>/table.md`).
    Evaluate {
        /// `report.json` files [default: `<out>/report.json`].
        reports: Vec<PathBuf>,
    },
    /// Per-segment class probabilities and a majority vote for one WAV file.
    Predict {
        /// WAV file at any sampling rate.
        wav: PathBuf,
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
    },
    /// Write a labeled synthetic corpus to `<out>/synth` with its manifest.
    Synth {
        /// Recordings per class [default: 100].
        #[arg(long)]
        per_class: Option<usize>,
        /// Recording length in seconds [default: 4].
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature cache directory [default: `<out>/cache`].
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Which branches to train [default: full].
    #[arg(long, value_parser = ["full", "cnn-only", "bilstm-only"])]
    pub mode: Option<String>,
    /// Maximum epochs per fold [default: 30].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 128].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 coefficient on the CNN weights [default: 0.0001].
    #[arg(long)]
    pub l2_lambda: Option<f64>,
    /// Number of cross-validation folds [default: 5].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Early-stopping patience in epochs [default: 5].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Smallest loss improvement that resets the patience counter [default: 0.0001].
    #[arg(long)]
    pub min_delta: Option<f64>,
}

/// Config file (if any) overlaid with global and command flags.
pub fn resolve_config(cli: &Cli) -> murmur_core::Result<RunConfig> {
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(out) = &g.out {
        config.out_dir = out.clone();
    }
    match &cli.command {
        Command::Manifest { root: Some(root), .. } => config.data_root = Some(root.clone()),
        Command::Featurize { cache: Some(cache), .. } => config.cache_dir = Some(cache.clone()),
        Command::Train(t) => {
            if let Some(c) = &t.cache {
                config.cache_dir = Some(c.clone());
            }
            if let Some(m) = &t.mode {
                config.mode = m.parse::<Branches>()?;
            }
            let overrides = [
                ("epochs", t.epochs.map(|v| v.to_string())),
                ("batch_size", t.batch_size.map(|v| v.to_string())),
                ("lr", t.lr.map(|v| v.to_string())),
                ("l2_lambda", t.l2_lambda.map(|v| v.to_string())),
                ("folds", t.folds.map(|v| v.to_string())),
                ("patience", t.patience.map(|v| v.to_string())),
                ("min_delta", t.min_delta.map(|v| v.to_string())),
            ];
            for (key, value) in overrides {
                if let Some(v) = value {
                    config.set(key, &v)?;
                }
            }
        }
        Command::Synth { per_class, duration } => {
            if let Some(n) = per_class {
                config.synth_per_class = *n;
            }
            if let Some(d) = duration {
                config.synth_duration_s = *d;
            }
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Corrupt(_) | Error::Shape(_) => 3,
        Error::Io { .. }
        | Error::Format(_)
        | Error::Argument(_)
        | Error::Validation(_)
        | Error::EmptyManifest
        | Error::Config(_)
        | Error::DegenerateInput(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = resolve_config(&cli).and_then(|config| commands::run(&cli, &config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
