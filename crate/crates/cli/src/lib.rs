//! Command-line driver for the hierarchical fusion pipeline.
//!
//! Every stage is a subcommand over one TOML config: `index`, `retrieve`,
//! `fuse`, `predict`, `eval`, `sweep` and `optsel`. Outputs land under
//! `paths.output`, each beside a `resolved-config.toml` snapshot.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hfrag_core::Mode;

use crate::commands::RunArg;
use crate::config::{ConfigError, Overrides, PipelineConfig, PredictorKind};

#[derive(Debug, Parser)]
#[command(name = "hfrag", version, about = "Hierarchical fusion RAG pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pipeline config file.
    #[arg(short, long, default_value = "hfrag.toml")]
    pub config: PathBuf,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Context size.
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ranker for the single-ranker modes.
    #[arg(long)]
    pub ranker: Option<String>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// Output directory, relative to the working directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Prediction file of an external predictor.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

impl Common {
    pub fn load(&self) -> Result<PipelineConfig> {
        let overrides = Overrides {
            mode: self.mode,
            k: self.k,
            alpha: self.alpha,
            ranker: self.ranker.clone(),
            predictor: self.predictor,
            output: self.output.clone(),
            predictions: self.predictions.clone(),
        };
        PipelineConfig::load(&self.config, &overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build BM25 indexes over the corpus and the labeled store.
    Index(Common),
    /// Retrieve pool-depth candidates per claim with BM25.
    Retrieve(Common),
    /// Fuse runs into per-claim contexts for the configured mode.
    Fuse {
        #[command(flatten)]
        common: Common,
        /// Use these run files instead of the configured directories.
        /// Form: PATH or source:ranker=PATH.
        #[arg(long = "run", value_name = "RUN")]
        runs: Vec<RunArg>,
    },
    /// Assemble prompts; the baseline predictor also answers them.
    Predict(Common),
    /// Score predictions and contexts.
    Eval(Common),
    /// Macro-F1 across context sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Context sizes, overriding `sweep_sizes`.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Alpha values to grid-search for lu_rag_alpha.
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Vec<f64>,
    },
    /// Best single-source, single-ranker configuration by gold macro-F1.
    Optsel(Common),
}

/// Runs a parsed command and returns its printable summary.
pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Index(c) => commands::cmd_index(&c.load()?),
        Command::Retrieve(c) => commands::cmd_retrieve(&c.load()?),
        Command::Fuse { common, runs } => commands::cmd_fuse(&common.load()?, runs),
        Command::Predict(c) => commands::cmd_predict(&c.load()?),
        Command::Eval(c) => commands::cmd_eval(&c.load()?),
        Command::Sweep {
            common,
            sizes,
            alpha_grid,
        } => commands::cmd_sweep(&common.load()?, sizes, alpha_grid),
        Command::Optsel(c) => commands::cmd_optsel(&c.load()?),
    }
}

/// 1 for usage and config problems, 2 for everything else.
pub fn exit_code(error: &anyhow::Error) -> u8 {
    let usage = error.chain().any(|cause| {
        cause.downcast_ref::<ConfigError>().is_some()
            || matches!(
                cause.downcast_ref::<hfrag_core::Error>(),
                Some(hfrag_core::Error::Mode(_))
            )
    });
    if usage {
        1
    } else {
        2
    }
}
