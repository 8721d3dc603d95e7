use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seqopt::config::{ExperimentConfig, PRESETS};
use seqopt::experiment::{run_experiment, summary_json, write_results};
use seqopt::Error;

#[derive(Parser)]
#[command(name = "seqopt", version, about = "Adaptive sample sizes for drifting stochastic optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded multi-run experiment and write its result files.
    Run(RunArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Base seed; overrides the config.
    #[arg(long, env = "SEQOPT_SEED")]
    seed: Option<u64>,
    /// Number of runs; overrides the config.
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => unreachable!("clap requires one of --config / --preset"),
    };
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(runs) = args.runs {
        if runs == 0 {
            return Err(Error::Config {
                path: "--runs".into(),
                reason: "must be >= 1".into(),
            });
        }
        cfg.run.runs = runs;
    }
    let res = run_experiment(&cfg)?;
    write_results(&res, &args.out, args.force)?;
    let summary = summary_json(&res);
    for arm in summary["arms"].as_array().into_iter().flatten() {
        println!(
            "{:<14} mean excess risk {}  mean test loss {}  mean samples {}",
            arm["policy"].as_str().unwrap_or("?"),
            arm["mean_excess_risk"],
            arm["mean_test_loss"],
            arm["mean_total_samples"],
        );
    }
    println!("results written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for (name, about) in PRESETS {
                println!("{name:<24} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(if e.is_config() { 2 } else { 3 })
            }
        },
    }
}
