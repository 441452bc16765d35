//! Command-line front end: one subcommand per experiment kind plus a
//! manifest-merging `report`. Exit codes: 0 success, 1 validation
//! failure (arguments or configuration), 2 runtime failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Error;
use crate::experiment::run_experiment;
use crate::report::emit_report_for_dirs;

#[derive(Parser)]
#[command(
    name = "pamlab",
    version,
    about = "Lattice heat equation with catalytic random media: exponents, \
             intermittency, Green constants, polaron constants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the configured one).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Replica-count override.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Green constants G_d and G_d* by both quadrature routes.
    Green(RunArgs),
    /// Finite-volume kappa=0 oracle against the closed form.
    Lambda0(RunArgs),
    /// One annealed moment series.
    Moments(RunArgs),
    /// Lyapunov exponents over a kappa list (common random numbers).
    Sweep(RunArgs),
    /// Sweep plus regime classification.
    Dichotomy(RunArgs),
    /// Variational constants P_3 and P_5 with maximizer profiles.
    Polaron(RunArgs),
    /// Monte Carlo moments against the exact small-system solver.
    OracleCheck(RunArgs),
    /// Merge run manifests into a comparison report (stdout).
    Report {
        /// Run directories or manifest files.
        paths: Vec<PathBuf>,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help and version are successful exits
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Report { paths } => match emit_report_for_dirs(&paths) {
            Ok(text) => {
                println!("{text}");
                0
            }
            Err(e) => {
                eprintln!("report failed: {e}");
                2
            }
        },
        Command::Green(a) => run_kind(ExperimentKind::Green, a),
        Command::Lambda0(a) => run_kind(ExperimentKind::Lambda0, a),
        Command::Moments(a) => run_kind(ExperimentKind::Moments, a),
        Command::Sweep(a) => run_kind(ExperimentKind::Sweep, a),
        Command::Dichotomy(a) => run_kind(ExperimentKind::Dichotomy, a),
        Command::Polaron(a) => run_kind(ExperimentKind::Polaron, a),
        Command::OracleCheck(a) => run_kind(ExperimentKind::OracleCheck, a),
    }
}

fn run_kind(kind: ExperimentKind, args: RunArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config.display());
            return 1;
        }
    };
    let mut config = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid configuration:\n{e}");
            return 1;
        }
    };
    if config.experiment.kind != kind {
        eprintln!(
            "configuration declares kind '{}' but the '{}' subcommand was invoked",
            config.experiment.kind.as_str(),
            kind.as_str()
        );
        return 1;
    }
    if let Some(out) = args.out {
        config.run.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(reps) = args.reps {
        config.run.n_reps = reps;
    }
    if let Err(e) = config.validate() {
        eprintln!("invalid configuration:\n{e}");
        return 1;
    }
    match run_experiment(&config) {
        Ok(manifest) => {
            println!(
                "wrote {} files to {}",
                manifest.files.len(),
                manifest.out_dir.display()
            );
            0
        }
        Err(e @ Error::ConfigInvalid(_)) | Err(e @ Error::InvalidInput(_)) => {
            eprintln!("invalid configuration:\n{e}");
            1
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            2
        }
    }
}
