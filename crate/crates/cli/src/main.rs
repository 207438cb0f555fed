//! `qsp-lab <stage> --manifest <path> --out <dir> [--seed N]`
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures such as over-mitigation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsp_core::experiment::{Experiment, RunManifest};
use qsp_core::Error;

#[derive(Parser)]
#[command(name = "qsp-lab", version, about = "Noise-aware QSP Hamiltonian simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral bounds and rescaling report.
    Preprocess(StageArgs),
    /// Block-encoding circuit and gate counts.
    BlockEncode(StageArgs),
    /// Phase factors for every time and candidate degree.
    Angles(StageArgs),
    /// Error budget grid and optimal degrees.
    Plan(StageArgs),
    /// Entropy series and bound-versus-emulation table.
    Simulate(StageArgs),
    /// All stages in order.
    RunAll(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the manifest's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn split(self) -> (&'static str, StageArgs) {
        match self {
            Command::Preprocess(a) => ("preprocess", a),
            Command::BlockEncode(a) => ("block-encode", a),
            Command::Angles(a) => ("angles", a),
            Command::Plan(a) => ("plan", a),
            Command::Simulate(a) => ("simulate", a),
            Command::RunAll(a) => ("run-all", a),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::Parse { .. }
        | Error::MissingEntry(_)
        | Error::DegenerateSpectrum(_)
        | Error::Capability(_)
        | Error::Io(_) => 2,
        _ => 3,
    }
}

fn run(stage: &str, args: StageArgs) -> Result<String, Error> {
    let mut manifest = RunManifest::load(&args.manifest)?;
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    let mut experiment = Experiment::new(manifest, args.out)?;
    experiment.run_stage(stage)?;
    Ok(format!("{}", experiment.out_dir().join("summary.toml").display()))
}

fn main() -> ExitCode {
    let (stage, args) = Cli::parse().command.split();
    match run(stage, args) {
        Ok(path) => {
            println!("{stage}: wrote {path}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qsp-lab {stage}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
