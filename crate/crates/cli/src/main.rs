use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use tclv_cli::commands::{default_artifacts, Options};
use tclv_cli::{cmd_clv, cmd_orbit, cmd_perturb, cmd_plot, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "tclv",
    version,
    about = "Tangent vectors along transient orbits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; defaults reproduce the reference run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Backward-pass seed, overriding `run.backward_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Forward-record checkpoint: written by `clv`, read by `perturb`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the base orbit and write orbit.csv.
    Orbit,
    /// Compute vectors and exponents; write vectors.csv and exponents.json.
    Clv,
    /// Perturb along vectors and write perturbed_<k>.csv and direction.json.
    Perturb,
    /// Write gnuplot scripts for CSV artifacts.
    Plot {
        /// CSV files; defaults to vectors.csv and perturbed_*.csv in the output directory.
        artifacts: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let opts = Options {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        checkpoint: cli.checkpoint,
    };
    let cfg = opts.load_config()?;
    let out = opts.out_dir(&cfg);
    let ckpt = opts.checkpoint.as_deref();
    match cli.command {
        Command::Orbit => cmd_orbit(&cfg, &out).map(|p| vec![p]),
        Command::Clv => cmd_clv(&cfg, &out, opts.seed, ckpt),
        Command::Perturb => cmd_perturb(&cfg, &out, opts.seed, ckpt),
        Command::Plot { artifacts } => {
            let artifacts = if artifacts.is_empty() {
                default_artifacts(&out)?
            } else {
                artifacts
            };
            cmd_plot(&cfg, &artifacts)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
