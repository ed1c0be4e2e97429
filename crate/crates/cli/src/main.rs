use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bagged_gmia_cli::{CliError, ExperimentConfig, Pipeline, Stage};
use clap::{Args, Parser, Subcommand};

/// Bagged generalized membership-inference attack pipeline.
#[derive(Parser)]
#[command(name = "bgmia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate reference and target plans.
    Allocate(Common),
    /// Train the reference model sets.
    TrainRefs(Common),
    /// Train the target model set.
    TrainTargets(Common),
    /// Extract confidence tensors from every model set.
    Extract(Common),
    /// Fit the per-point attack models.
    Attack(Common),
    /// Evaluate the per-point attacks against the targets.
    Evaluate(Common),
    /// Fit and evaluate the class-based and random-guess baselines.
    Baseline(Common),
    /// Compare the vulnerable-point sets of all attacks.
    Compare(Common),
    /// Run every stage.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of concurrent training tasks.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common) = match cli.command {
        Command::Allocate(c) => (Stage::Allocate, c),
        Command::TrainRefs(c) => (Stage::TrainRefs, c),
        Command::TrainTargets(c) => (Stage::TrainTargets, c),
        Command::Extract(c) => (Stage::Extract, c),
        Command::Attack(c) => (Stage::Attack, c),
        Command::Evaluate(c) => (Stage::Evaluate, c),
        Command::Baseline(c) => (Stage::Baseline, c),
        Command::Compare(c) | Command::Run(c) => (Stage::Compare, c),
    };
    match execute(stage, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(stage: Stage, common: &Common) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&common.config)?;
    config.validate()?;
    let base = common.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(|dir| base.join(dir)))
        .ok_or_else(|| CliError::Config(vec!["no output directory: pass --out or set output_dir".into()]))?;
    let mut pipeline = Pipeline::new(config, out, base, common.parallelism)?.quiet(common.quiet);
    pipeline.run_stage(stage)
}
