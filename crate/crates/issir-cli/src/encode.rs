//! Encode stems plus their mixture into a side-information stream.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use issir::codec::{encode, rate_control, CodecConfig, Encoded};
use issir::stft::Overlap;

use crate::wav::{read_all_same_rate, read_mono};

#[derive(Clone, Copy, ValueEnum)]
pub enum OverlapArg {
    /// 50% window overlap
    Half,
    /// 75% window overlap
    ThreeQuarters,
}

impl From<OverlapArg> for Overlap {
    fn from(o: OverlapArg) -> Self {
        match o {
            OverlapArg::Half => Overlap::Half,
            OverlapArg::ThreeQuarters => Overlap::ThreeQuarters,
        }
    }
}

#[derive(clap::Args)]
pub struct Args {
    /// Mixture WAV (must equal the sum of the stems)
    #[arg(long)]
    mix: PathBuf,
    /// Stem WAVs, one per source
    #[arg(long, num_args = 1.., required = true)]
    stems: Vec<PathBuf>,
    /// Output side-info file
    #[arg(long)]
    out: PathBuf,
    /// Target rate in kb per source per second; when set, the silence
    /// threshold and band count are searched automatically
    #[arg(long)]
    target_rate: Option<f64>,
    /// Quantizer step in dB
    #[arg(long, default_value_t = 1.0)]
    step_db: f64,
    /// Silence threshold in dB below each source's peak band
    #[arg(long, default_value_t = -80.0, allow_hyphen_values = true)]
    threshold_db: f64,
    /// Activity threshold on the power fraction
    #[arg(long, default_value_t = 0.01)]
    rho: f64,
    /// Frequency bands on the large window
    #[arg(long, default_value_t = 250)]
    bands: usize,
    /// Frequency bands on the small window
    #[arg(long, default_value_t = 25)]
    bands_small: usize,
    /// Large analysis window length in samples
    #[arg(long, default_value_t = 2_048)]
    window: usize,
    /// Small analysis window length in samples (dual-resolution only)
    #[arg(long, default_value_t = 256)]
    window_small: usize,
    /// Window overlap
    #[arg(long, value_enum, default_value_t = OverlapArg::Half)]
    overlap: OverlapArg,
    /// Add short-window analysis at detected transients
    #[arg(long)]
    dual: bool,
}

pub fn run(args: &Args) -> Result<()> {
    let mix = read_mono(&args.mix)?;
    let stems = read_all_same_rate(&args.stems)?;
    if stems.iter().any(|s| s.sample_rate != mix.sample_rate) {
        bail!("stems and mixture must share one sample rate");
    }
    let cfg = CodecConfig {
        window_large: args.window,
        window_small: args.window_small,
        overlap: args.overlap.into(),
        dual: args.dual,
        quant_step_db: args.step_db,
        threshold_db: args.threshold_db,
        activity_threshold: args.rho,
        num_bands_large: args.bands,
        num_bands_small: args.bands_small,
        target_rate: None,
    };
    let encoded: Encoded = match args.target_rate {
        Some(target) => rate_control(&mix, &stems, &cfg, target)?.encoded,
        None => encode(&mix, &stems, &cfg)?,
    };
    fs::write(&args.out, &encoded.bytes)
        .with_context(|| format!("write {}", args.out.display()))?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out.display().to_string(),
            "bytes": encoded.bytes.len(),
            "rate_kb_per_source_s": encoded.rate_kbps(),
            "threshold_db": encoded.bundle.threshold_db(),
            "step_db": encoded.bundle.quant_step_db(),
            "bands": encoded.bundle.num_bands_large,
            "dual": encoded.bundle.dual,
            "transients": encoded.bundle.transient_frames.len(),
            "sources": encoded.bundle.num_sources(),
        })
    );
    Ok(())
}
