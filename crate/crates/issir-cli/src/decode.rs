//! Reconstruct sources from a mixture and an encoded side-info stream.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use issir::codec::decode;
use issir::reconstruct::{issir_reconstruct, ErrorDivisor, ReconParams};

use crate::wav::{read_mono, write_float};

#[derive(clap::Args)]
pub struct Args {
    /// Mixture WAV
    #[arg(long)]
    mix: PathBuf,
    /// Side-info file produced by `encode`
    #[arg(long)]
    side: PathBuf,
    /// Directory the reconstructed sources are written into
    #[arg(long)]
    out_dir: PathBuf,
    /// Output file name stem; sources land at `<prefix>_00.wav`, ...
    #[arg(long, default_value = "source")]
    prefix: String,
    /// Number of correction iterations
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    /// Remix error divisor: a fixed number, or `active` for the per-bin
    /// count of active sources
    #[arg(long, default_value = "40")]
    divisor: String,
    /// Skip activity gating and treat every source as active everywhere
    #[arg(long)]
    unmasked: bool,
}

pub fn parse_divisor(text: &str) -> Result<ErrorDivisor> {
    if text.eq_ignore_ascii_case("active") {
        return Ok(ErrorDivisor::ActiveCount);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(ErrorDivisor::Fixed(v)),
        _ => bail!("divisor must be a positive number or `active`, got `{text}`"),
    }
}

pub fn run(args: &Args) -> Result<()> {
    let mix = read_mono(&args.mix)?;
    let bytes = fs::read(&args.side)
        .with_context(|| format!("read {}", args.side.display()))?;
    let bundle = decode(&bytes)?;
    if bundle.sample_rate != mix.sample_rate {
        bail!(
            "side info was encoded at {} Hz but the mixture is {} Hz",
            bundle.sample_rate,
            mix.sample_rate
        );
    }
    let params = ReconParams {
        divisor: parse_divisor(&args.divisor)?,
        use_activity: !args.unmasked,
        ..ReconParams::default()
    }
    .with_iterations(args.iterations);
    let sources = issir_reconstruct(&mix, &bundle, &params)?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("create {}", args.out_dir.display()))?;
    let mut paths = Vec::with_capacity(sources.len());
    for (j, source) in sources.iter().enumerate() {
        let path = args.out_dir.join(format!("{}_{j:02}.wav", args.prefix));
        write_float(&path, source)?;
        paths.push(path.display().to_string());
    }
    println!(
        "{}",
        serde_json::json!({
            "sources": paths,
            "iterations": params.iterations,
            "sample_rate": mix.sample_rate,
        })
    );
    Ok(())
}
