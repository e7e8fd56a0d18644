//! Experiment runner for tiltlab: configuration, subcommands and artifacts.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tiltlab::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "io",
            CliError::Config(_) => "config",
            CliError::Threshold(_) => "threshold",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Threshold(_) => 3,
            _ => 2,
        }
    }

    /// One line: `error code=<code> message=<text>`.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error code={} message={}", self.code(), msg)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tiltlab", version, about = "Reward-tilted fine-tuning experiments on enumerable toy problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; defaults are used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set training.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct WithModel {
    #[command(flatten)]
    pub common: Common,
    /// Parametric model file; without it the command pretrains (or uses the
    /// exact base model for `sample` and `evaluate`).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the parametric model on the base distribution.
    Pretrain(Common),
    /// Fine-tune toward the reward-tilted target.
    Finetune(WithModel),
    /// Draw sequences and score them.
    Sample(WithModel),
    /// Exact divergences against the base and tilted distributions.
    Evaluate(WithModel),
    /// Continuous-time control verification on a small chain.
    SocCheck(Common),
    /// Tree search with a Pareto buffer; writes the front and its hypervolume.
    ParetoDemo(Common),
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output_dir={}", serde_json::Value::String(out.display().to_string())));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Pretrain(c) | Command::SocCheck(c) | Command::ParetoDemo(c) => c,
        Command::Finetune(m) | Command::Sample(m) | Command::Evaluate(m) => &m.common,
    };
    let cfg = common.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Pretrain(_) => commands::pretrain(&cfg),
        Command::Finetune(m) => commands::finetune(&cfg, m.model.as_deref()),
        Command::Sample(m) => commands::sample(&cfg, m.model.as_deref()),
        Command::Evaluate(m) => commands::evaluate(&cfg, m.model.as_deref()),
        Command::SocCheck(_) => commands::soc_check(&cfg),
        Command::ParetoDemo(_) => commands::pareto_demo(&cfg),
    })
}
