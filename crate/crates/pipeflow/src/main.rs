//! Command-line experiment runner. Each subcommand exercises one slice of
//! the pipeline; `all` runs it end to end. Exit code 0 iff every
//! acceptance check of the executed stages passed.

use clap::{Parser, Subcommand};
use pipeflow::config::{example_config, ExperimentConfig};
use pipeflow::driver::{
    correlation_estimate, separated_events_test, BlockEvent, SectorReadout, SuspensionDriver,
};
use pipeflow::experiment::{run_pipeline, StopAfter};
use pipeflow::stats::three_sigma;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pipeflow", about = "ergodic map, step-skew, and pipe-flow experiments")]
struct Cli {
    /// JSON experiment configuration; built-in doubling defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// master seed, overriding the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory, overriding the configuration
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads for the Monte Carlo stages
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the box partition and transition matrix
    Partition,
    /// Partition plus step-skew diagnostics
    Stepskew,
    /// Mixing diagnostics of the suspension driver alone
    DriverTest,
    /// Everything through the pipe-flow orbit sample
    Pipeflow,
    /// Full pipeline including the path-law comparison
    Compare,
    /// Alias for `compare`: the complete experiment
    All,
}

fn load_config(cli: &Cli) -> pipeflow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => example_config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn driver_test(config: &ExperimentConfig) -> pipeflow::Result<bool> {
    let driver = SuspensionDriver::new(
        config.driver.block_len,
        config.driver.ceiling,
        config.seed,
    );
    let readout = SectorReadout::build(&[0.2, 0.3, 0.5], config.driver.block_len)?;
    let trials = 100_000;
    let separation = 3.0 * config.driver.ceiling;
    let pairs = separated_events_test(&driver, &readout, separation, 2, trials, config.seed)?;
    let alphabet = driver.alphabet_size();
    let a = BlockEvent::from_predicate(alphabet, |s| s % 2 == 0);
    let b = BlockEvent::from_predicate(alphabet, |s| s < alphabet / 2);
    let lag = config.driver.ceiling * config.driver.block_len as f64;
    let corr = correlation_estimate(&driver, &a, &b, lag, trials, config.seed)?;
    let pairs_ok = pairs.max_deviation < three_sigma(0.25, trials);
    let corr_ok = (corr.joint - corr.product).abs() < three_sigma(corr.product, trials);
    let report = serde_json::json!({
        "separation": pairs,
        "correlation": corr,
        "pairs_within_3_sigma": pairs_ok,
        "correlation_within_3_sigma": corr_ok,
    });
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(
        config.out_dir.join("driver.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!("{report:#}");
    Ok(pairs_ok && corr_ok)
}

fn run(cli: &Cli) -> pipeflow::Result<bool> {
    let config = load_config(cli)?;
    let stop = match cli.command {
        Command::Partition => StopAfter::Partition,
        Command::Stepskew => StopAfter::Stepskew,
        Command::DriverTest => return driver_test(&config),
        Command::Pipeflow => StopAfter::Pipeflow,
        Command::Compare | Command::All => StopAfter::Comparison,
    };
    let manifest = run_pipeline(&config, stop)?;
    for stage in &manifest.stages {
        println!("stage {}: {} {:#}", stage.stage, stage.status, stage.details);
    }
    println!(
        "manifest: {} ({} files, pass = {})",
        config.out_dir.join("manifest.json").display(),
        manifest.files.len(),
        manifest.pass
    );
    Ok(manifest.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
