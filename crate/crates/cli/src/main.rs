//! `fgmask` command-line tool.

mod commands;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{analyze, calibrate, mask, phantom, pretrain, sweep, verify};

#[derive(Debug, Parser)]
#[command(name = "fgmask", version, about = "Foreground-aware subvolume masking for CT volumes")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic CT phantom and its label map.
    Phantom(phantom::Args),
    /// Partition a volume, classify foreground subvolumes and mask them.
    Mask(mask::Args),
    /// Entropy, complexity and neighbour MI of foreground and background.
    Analyze(analyze::Args),
    /// Estimate the foreground threshold from labelled volumes.
    Calibrate(calibrate::Args),
    /// Train the masked-reconstruction model.
    Pretrain(pretrain::Args),
    /// Train one model per masking strategy and ratio.
    Sweep(sweep::Args),
    /// Re-check a mask plan against its source volume.
    Verify(verify::Args),
}

/// Exit status for a failed run.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<fgmask::Error>() {
        Some(fgmask::Error::NoForeground { .. }) => 3,
        Some(fgmask::Error::Divisibility { .. }) => 4,
        Some(fgmask::Error::NoSeparation) => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }

    let result = match cli.command {
        Command::Phantom(a) => phantom::run(a),
        Command::Mask(a) => mask::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Calibrate(a) => calibrate::run(a),
        Command::Pretrain(a) => pretrain::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Verify(a) => verify::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
