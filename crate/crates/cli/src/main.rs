use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cwrsim::output::{compare_report, simulate_to_dir};
use cwrsim::ScenarioConfig;

#[derive(Parser)]
#[command(name = "cwrsim", version, about = "Two-path transport simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write per-run CSVs, a manifest and the pooled CCDF.
    Simulate {
        scenario: PathBuf,
        /// Seed of the first repetition; overrides the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Repetitions, seeded seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Output directory; defaults to the file's output_dir, then ./out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare run directories written by `simulate`.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn simulate(scenario: PathBuf, seed: Option<u64>, reps: u64, out: Option<PathBuf>) -> Result<()> {
    anyhow::ensure!(reps >= 1, "--reps must be at least 1");
    let mut cfg = ScenarioConfig::load(&scenario)
        .with_context(|| format!("reading {}", scenario.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let dirs = simulate_to_dir(&cfg, reps, &out)
        .with_context(|| format!("simulating {}", scenario.display()))?;
    for d in &dirs {
        println!("{}", d.display());
    }
    Ok(())
}

fn compare(dirs: &[PathBuf]) -> Result<()> {
    for d in dirs {
        anyhow::ensure!(d.is_dir(), "{}: not a directory", d.display());
    }
    print!("{}", compare_report(dirs)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            scenario,
            seed,
            reps,
            out,
        } => simulate(scenario, seed, reps, out),
        Command::Compare { dirs } => compare(&dirs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
