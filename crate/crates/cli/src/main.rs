use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use conic_scatter::config::{ExperimentConfig, ExperimentKind};
use conic_scatter::error::CliError;
use conic_scatter::experiments::run_and_write;

/// Classical and semiclassical conic-scattering experiments.
#[derive(Parser)]
#[command(name = "conic-scatter", version, about)]
struct Cli {
    /// Experiment to run; must match the config file.
    experiment: ExperimentKind,

    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Random seed for test-point draws (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    // CONIC_SCATTER_THREADS caps worker parallelism.
    if let Ok(threads) = std::env::var("CONIC_SCATTER_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    match execute(&cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => {
            eprintln!("one or more checks failed (see manifest.json)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::io(cli.config.display().to_string(), e))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if config.experiment != cli.experiment {
        return Err(CliError::Usage(format!(
            "config declares experiment '{}' but '{}' was requested",
            config.experiment, cli.experiment
        )));
    }
    if let Some(out) = &cli.out {
        config.output = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = PathBuf::from(&config.output);
    let manifest = run_and_write(&config, &out_dir)?;
    for check in &manifest.checks {
        println!(
            "{} {} ({})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    println!("manifest: {}", out_dir.join("manifest.json").display());
    Ok(manifest.all_passed())
}
