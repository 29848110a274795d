//! Command-line front end for informed source separation: synthesize test
//! scenes, encode side info against a rate target, reconstruct sources from
//! a mixture, score estimates, and sweep parameter grids.

mod decode;
mod encode;
mod eval;
mod fixture;
mod sweep;
mod wav;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "issir", version, about = "Informed source separation codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-stem scene as WAV files
    Fixture(fixture::Args),
    /// Encode stem side info against the mixture
    Encode(encode::Args),
    /// Reconstruct sources from mixture plus side info
    Decode(decode::Args),
    /// Score estimates against reference stems
    Eval(eval::Args),
    /// Run a parameter grid over one scene and tabulate scores
    Sweep(sweep::Args),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fixture(args) => fixture::run(args),
        Command::Encode(args) => encode::run(args),
        Command::Decode(args) => decode::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Sweep(args) => sweep::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(3);
    }
}
