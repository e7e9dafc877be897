//! `facesr`: dataset preparation, training, evaluation and reporting.
//!
//! Every command reads an optional flat TOML file, applies flag overrides and
//! writes a `run_manifest.json` next to its outputs.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use facesr_core::{Error, Result};
use toml::Table;

use config::{
    check_keys, float_value, int_value, merge, path_value, paths_value, read_table, str_value, strings_value, usize_value,
    EvalSrConfig, EvalVerifyConfig, PrepareConfig, ReportConfig, TrainConfig,
};

pub use commands::{execute, replay, Completed, Invocation};
pub use manifest::RunManifest;

/// Directory holding backend artifacts such as cached replay embeddings.
pub const BACKEND_CACHE_ENV: &str = "FACESR_BACKEND_CACHE";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Lookup { .. } | Error::Backend(_) => EXIT_CONFIG,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "facesr", version, about = "Recognition-driven face super-resolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Flat TOML file; flags override its values.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crappify a directory of face images into an LR/HR pair dataset.
    Prepare {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        raw_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u32>,
    },
    /// Train one registered model.
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        base_lr: Option<f64>,
        #[arg(long)]
        seed: Option<u32>,
        #[arg(long)]
        train_limit: Option<usize>,
    },
    /// PSNR, SSIM and timing of checkpoints against the validation split.
    EvalSr {
        #[command(flatten)]
        cfg: ConfigArg,
        /// `path` or `Model Name=path`; repeatable.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<String>,
        #[arg(long)]
        val_dir: Option<PathBuf>,
        #[arg(long)]
        val_limit: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        ssim_mode: Option<String>,
    },
    /// Rank-1 identification accuracy with super-resolved face crops.
    EvalVerify {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long = "checkpoint")]
        checkpoints: Vec<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        adapter: Option<String>,
        #[arg(long)]
        task: Option<String>,
        /// `no-resize`, `size40` or `size40-margin13`; repeatable.
        #[arg(long = "setting")]
        settings: Vec<String>,
        #[arg(long)]
        seed: Option<u32>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        embedder: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Emit markdown, JSON and SVG tables from evaluation records.
    Report {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Include the shipped thesis tables and statistics.
        #[arg(long)]
        thesis: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Rerun the command recorded in a run manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load(cfg: &ConfigArg, command: &str, keys: &[&str]) -> Result<Table> {
    let table = match &cfg.config {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    check_keys(&table, command, keys)?;
    Ok(table)
}

fn invocation(command: &str, cfg: &ConfigArg, table: Table) -> Invocation {
    Invocation {
        command: command.to_string(),
        config_path: cfg.config.clone(),
        table,
    }
}

impl Command {
    /// Merges the config file and flags into an invocation.
    pub fn invocation(&self) -> Result<Invocation> {
        Ok(match self {
            Command::Prepare {
                cfg,
                raw_dir,
                out_dir,
                count,
                seed,
            } => {
                let mut t = load(cfg, "prepare", PrepareConfig::KEYS)?;
                merge(
                    &mut t,
                    vec![
                        ("raw_dir", path_value(raw_dir)),
                        ("out_dir", path_value(out_dir)),
                        ("count", usize_value(*count)),
                        ("seed", int_value(*seed)),
                    ],
                );
                invocation("prepare", cfg, t)
            }
            Command::Train {
                cfg,
                model,
                dataset,
                out_dir,
                epochs,
                batch_size,
                base_lr,
                seed,
                train_limit,
            } => {
                let mut t = load(cfg, "train", TrainConfig::KEYS)?;
                merge(
                    &mut t,
                    vec![
                        ("model", str_value(model)),
                        ("dataset", path_value(dataset)),
                        ("out_dir", path_value(out_dir)),
                        ("epochs", usize_value(*epochs)),
                        ("batch_size", usize_value(*batch_size)),
                        ("base_lr", float_value(*base_lr)),
                        ("seed", int_value(*seed)),
                        ("train_limit", usize_value(*train_limit)),
                    ],
                );
                invocation("train", cfg, t)
            }
            Command::EvalSr {
                cfg,
                checkpoints,
                val_dir,
                val_limit,
                out_dir,
                ssim_mode,
            } => {
                let mut t = load(cfg, "eval-sr", EvalSrConfig::KEYS)?;
                merge(
                    &mut t,
                    vec![
                        ("checkpoints", strings_value(checkpoints)),
                        ("val_dir", path_value(val_dir)),
                        ("val_limit", usize_value(*val_limit)),
                        ("out_dir", path_value(out_dir)),
                        ("ssim_mode", str_value(ssim_mode)),
                    ],
                );
                invocation("eval-sr", cfg, t)
            }
            Command::EvalVerify {
                cfg,
                checkpoints,
                dataset,
                adapter,
                task,
                settings,
                seed,
                trials,
                embedder,
                out_dir,
            } => {
                let mut t = load(cfg, "eval-verify", EvalVerifyConfig::KEYS)?;
                merge(
                    &mut t,
                    vec![
                        ("checkpoints", strings_value(checkpoints)),
                        ("dataset", path_value(dataset)),
                        ("adapter", str_value(adapter)),
                        ("task", str_value(task)),
                        ("settings", strings_value(settings)),
                        ("seed", int_value(*seed)),
                        ("trials", usize_value(*trials)),
                        ("embedder", str_value(embedder)),
                        ("out_dir", path_value(out_dir)),
                    ],
                );
                invocation("eval-verify", cfg, t)
            }
            Command::Report {
                cfg,
                inputs,
                thesis,
                out_dir,
            } => {
                let mut t = load(cfg, "report", ReportConfig::KEYS)?;
                merge(
                    &mut t,
                    vec![
                        ("inputs", paths_value(inputs)),
                        ("thesis", thesis.then_some(toml::Value::Boolean(true))),
                        ("out_dir", path_value(out_dir)),
                    ],
                );
                invocation("report", cfg, t)
            }
            Command::Replay { manifest, out_dir } => replay(manifest, out_dir.as_deref())?,
        })
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let inv = match cli.command.invocation() {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match execute(&inv) {
        Ok(done) => {
            if let Some(p) = &done.manifest_path {
                println!("{}", p.display());
            }
            0
        }
        Err((e, _)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
