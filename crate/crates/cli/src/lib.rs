//! `ipt` command-line front end: synthetic data generation, protocol runs,
//! checkpoint evaluation, PCA projections and report merging.

pub mod commands;
pub mod config;
pub mod summary;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ipt", version, about = "Prototype-based class-incremental learning over frozen embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Base seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded multi-modal synthetic embedding dataset.
    GenSynthetic(GenSyntheticArgs),
    /// Train through every phase of the configured protocol.
    Run(RunArgs),
    /// Evaluate a bank checkpoint on a test split.
    Eval(EvalArgs),
    /// PCA-project samples and prototypes to 2-D for plotting.
    Project(ProjectArgs),
    /// Combine run reports into one comparison table.
    ReportMerge(ReportMergeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub per_class_train: Option<usize>,
    #[arg(long)]
    pub per_class_test: Option<usize>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub center_scale: Option<f64>,
    #[arg(long)]
    pub mode_separation: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Comma-separated seeds for a sweep; each run goes to `<out>/seed_<s>`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Parallel runs during a sweep.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write a bank checkpoint after every phase.
    #[arg(long)]
    pub checkpoints: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Test split file; defaults to the config's test data.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Embedding file to project; defaults to the config's test data.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReportMergeArgs {
    /// report.json files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(&cli.common, &a),
        Command::Run(a) => commands::run(&cli.common, &a),
        Command::Eval(a) => commands::eval(&cli.common, &a),
        Command::Project(a) => commands::project(&cli.common, &a),
        Command::ReportMerge(a) => commands::report_merge(&cli.common, &a),
    }
}
