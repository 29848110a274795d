//! Mono WAV input/output for the command-line tools.

use std::path::Path;

use anyhow::{bail, Context, Result};
use issir::Signal;

/// Read a mono WAV file into a float signal normalized to [-1, 1]. Integer
/// samples are scaled by their format's full range. Stereo input is refused
/// rather than silently downmixed, so channel handling stays the caller's
/// explicit decision.
pub fn read_mono(path: &Path) -> Result<Signal<f64>> {
    let mut reader =
        hound::WavReader::open(path).with_context(|| format!("open {}", path.display()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        bail!(
            "{}: has {} channels; mono input required",
            path.display(),
            spec.channels
        );
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("read {}", path.display()))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("read {}", path.display()))?
        }
    };
    if samples.is_empty() {
        bail!("{}: contains no samples", path.display());
    }
    Ok(Signal::new(samples, spec.sample_rate))
}

/// Write a signal as 32-bit float samples, preserving out-of-range peaks
/// that integer PCM would clip.
pub fn write_float(path: &Path, signal: &Signal<f64>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer =
        hound::WavWriter::create(path, spec).with_context(|| format!("create {}", path.display()))?;
    for &x in &signal.samples {
        writer.write_sample(x as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Read several signals and require a shared sample rate.
pub fn read_all_same_rate(paths: &[std::path::PathBuf]) -> Result<Vec<Signal<f64>>> {
    let signals: Vec<Signal<f64>> = paths.iter().map(|p| read_mono(p)).collect::<Result<_>>()?;
    for (path, s) in paths.iter().zip(&signals).skip(1) {
        if s.sample_rate != signals[0].sample_rate {
            bail!(
                "{}: sample rate {} differs from {} in {}",
                path.display(),
                s.sample_rate,
                signals[0].sample_rate,
                paths[0].display()
            );
        }
    }
    Ok(signals)
}
