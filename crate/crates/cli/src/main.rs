use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ungan_core::experiment::{run_experiment_file, run_stage, ExperimentConfig, RunOptions, Stage};

#[derive(Parser)]
#[command(
    name = "ungan",
    version,
    about = "GAN-assisted machine unlearning on a toy benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage into one directory.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `output_dir`, then `runs/default`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate and split the data, then train the classifier.
    Pretrain {
        config: PathBuf,
        #[command(flatten)]
        dirs: Dirs,
    },
    /// Train both GANs and write labelled synthetic sets.
    GanTrain {
        #[command(flatten)]
        dirs: Dirs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fine-tune the proposed model and both baselines.
    Unlearn {
        #[command(flatten)]
        dirs: Dirs,
    },
    /// Compute accuracy and membership-inference metrics.
    Evaluate {
        #[command(flatten)]
        dirs: Dirs,
    },
    /// Regenerate the metrics from checkpoints and write the report tables.
    Report {
        #[command(flatten)]
        dirs: Dirs,
    },
}

#[derive(Args)]
struct Dirs {
    /// Directory holding earlier stages' artifacts; defaults to `--out`.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

impl Dirs {
    fn input(&self) -> &Path {
        self.input.as_deref().unwrap_or(&self.out)
    }
}

fn stage(stage: Stage, config: Option<&ExperimentConfig>, dirs: &Dirs, jobs: usize) -> Result<()> {
    let rec = run_stage(stage, config, dirs.input(), &dirs.out, &RunOptions { jobs })
        .with_context(|| format!("stage {stage} failed"))?;
    info!("{stage}: wrote {} artifacts", rec.outputs.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, jobs } => {
            let (dir, manifest) =
                run_experiment_file(&config, out.as_deref(), &RunOptions { jobs })
                    .with_context(|| format!("experiment {} failed", config.display()))?;
            println!(
                "{}: {} stages, {} artifacts",
                dir.display(),
                manifest.stages.len(),
                manifest.artifact_hashes().len()
            );
        }
        Command::Pretrain { config, dirs } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            stage(Stage::Pretrain, Some(&cfg), &dirs, 1)?;
        }
        Command::GanTrain { dirs, jobs } => stage(Stage::GanTrain, None, &dirs, jobs)?,
        Command::Unlearn { dirs } => stage(Stage::Unlearn, None, &dirs, 1)?,
        Command::Evaluate { dirs } => stage(Stage::Evaluate, None, &dirs, 1)?,
        Command::Report { dirs } => stage(Stage::Report, None, &dirs, 1)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UNGAN_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
