use std::path::PathBuf;
use std::process::ExitCode;

use ancilla_lab::commands::{cmd_builtin, cmd_optimal_points, cmd_sweep, cmd_validate, SweepTargets, Written, FIG2A, FIG2B, FIG3};
use ancilla_lab::sweep::default_jobs;
use ancilla_lab::{load_config, LabResult, ValidateOptions};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ancilla-lab", version, about = "Probe-ancilla metrology sweeps, figures and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fig2Variant {
    A,
    B,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config and write CSV (and SVG).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        /// CSV output path; overrides the config. Without one the CSV goes to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// SVG output path; overrides the config. Requires a CSV path.
        #[arg(long)]
        fig: Option<PathBuf>,
    },
    /// Check the analytic identities for the configured protocol.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Noiseless QFI traces with envelope and peak markers.
    Fig2 {
        #[arg(long, value_enum, default_value = "a")]
        variant: Fig2Variant,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Segmented noisy QFI against total time.
    Fig3 {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the optimal measurement times and probe states.
    OptimalPoints {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
}

fn report(written: &Written) {
    for p in written.csv.iter().chain(&written.svg) {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> LabResult<i32> {
    let mut stdout = std::io::stdout().lock();
    let jobs = |j: Option<usize>| j.unwrap_or_else(default_jobs).max(1);
    match cli.command {
        Command::Sweep { config, jobs: j, csv, fig } => {
            let cfg = load_config(&config)?;
            let written = cmd_sweep(&cfg, jobs(j), &SweepTargets { csv, svg: fig }, &mut stdout)?;
            drop(stdout);
            report(&written);
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            cmd_validate(&cfg, &ValidateOptions::default(), &mut stdout)
        }
        Command::Fig2 { variant, out_dir, jobs: j } => {
            let text = match variant {
                Fig2Variant::A => FIG2A,
                Fig2Variant::B => FIG2B,
            };
            drop(stdout);
            report(&cmd_builtin(text, &out_dir, jobs(j))?);
            Ok(0)
        }
        Command::Fig3 { out_dir, jobs: j } => {
            drop(stdout);
            report(&cmd_builtin(FIG3, &out_dir, jobs(j))?);
            Ok(0)
        }
        Command::OptimalPoints { config, count } => {
            let cfg = load_config(&config)?;
            cmd_optimal_points(&cfg, count, &mut stdout)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LAB_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
