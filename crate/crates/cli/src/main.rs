use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hwlab_cli::record::{self, RECORD_FILE};
use hwlab_cli::{CliError, Experiment, ExperimentConfig};

/// Runs one queueing experiment from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "hwlab", version)]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// Experiment config (JSON, schema "hwlab/1").
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replications. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn configure_workers(workers: Option<usize>) -> Result<(), CliError> {
    match workers {
        Some(0) => Err(CliError::validation("--workers", "must be at least 1")),
        #[cfg(feature = "parallel")]
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Other(e.into())),
        _ => Ok(()),
    }
}

fn run(args: Args) -> Result<(), CliError> {
    configure_workers(args.workers)?;
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.experiment != args.experiment {
        return Err(CliError::validation(
            "experiment",
            format!(
                "config is for \"{}\" but the subcommand is \"{}\"",
                config.experiment.name(),
                args.experiment.name()
            ),
        ));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dir = args
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("hwlab-out").join(config.experiment.name()));
    let rec = record::run(&config, &dir)?;
    for (name, digest) in &rec.outputs {
        println!("{digest}  {}", dir.join(name).display());
    }
    println!("record: {}", dir.join(RECORD_FILE).display());
    match rec.check_passed {
        Some(false) => Err(CliError::Check(format!(
            "{} reported violations; see {}",
            config.experiment.name(),
            dir.join(RECORD_FILE).display()
        ))),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
