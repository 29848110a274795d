//! Log-domain quantization of band-pooled spectrogram energies.
//!
//! Per source and resolution, band energies are expressed in dB relative to
//! the loudest band (the "norm"), floored by a threshold, and rounded to a
//! uniform step. Codes are small unsigned integers: zero marks a discarded
//! (silent) band, and `1 + k` stands for `-k` steps below the norm.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Mean power per band: pool a `(frames x bins)` power block down to
/// `(frames x bands)` using the given edges.
pub fn pool_bands(power: &Array2<f64>, edges: &[usize]) -> Array2<f64> {
    let frames = power.nrows();
    let bands = edges.len() - 1;
    let mut pooled = Array2::zeros((frames, bands));
    for f in 0..frames {
        for (i, pair) in edges.windows(2).enumerate() {
            let width = pair[1] - pair[0];
            let sum: f64 = (pair[0]..pair[1]).map(|b| power[[f, b]]).sum();
            pooled[[f, i]] = sum / width as f64;
        }
    }
    pooled
}

/// Reference level for a set of pooled blocks: the loudest band anywhere, in
/// dB. All-silent input gets negative infinity, which encodes and decodes
/// losslessly and makes every band quantize to silence.
pub fn norm_db(pooled: &[&Array2<f64>]) -> f64 {
    let max = pooled
        .iter()
        .flat_map(|b| b.iter().copied())
        .fold(0.0f64, f64::max);
    10.0 * max.log10()
}

/// Quantize one pooled block against a norm. Bands whose level falls below
/// `threshold_db` (relative to the norm) are discarded as silent.
pub fn quantize_block(
    pooled: &Array2<f64>,
    norm_db: f64,
    step_db: f64,
    threshold_db: f64,
) -> Array2<u16> {
    pooled.mapv(|e| {
        if e <= 0.0 || norm_db == f64::NEG_INFINITY {
            return 0;
        }
        let rel = 10.0 * e.log10() - norm_db;
        if rel < threshold_db {
            return 0;
        }
        let idx = (rel / step_db).round().min(0.0);
        1 + (-idx) as u16
    })
}

/// Invert [`quantize_block`]: silent bands become zero energy, others the
/// center of their quantization cell.
pub fn dequantize_block(codes: &Array2<u16>, norm_db: f64, step_db: f64) -> Array2<f64> {
    codes.mapv(|c| {
        if c == 0 || norm_db == f64::NEG_INFINITY {
            0.0
        } else {
            let rel = -((c - 1) as f64) * step_db;
            10.0f64.powf((rel + norm_db) / 10.0)
        }
    })
}

/// Largest code a (step, threshold) pair can produce; used to bound the wire
/// format.
pub fn max_code(step_db: f64, threshold_db: f64) -> Result<u16> {
    let worst = 1.0 + (-threshold_db / step_db).round();
    if !(worst.is_finite() && worst <= u16::MAX as f64) {
        return Err(Error::InvalidConfig(format!(
            "step {step_db} dB with threshold {threshold_db} dB needs codes past u16"
        )));
    }
    Ok(worst as u16)
}

/// Spread dequantized band energies flat across their bins and convert to
/// per-bin magnitudes.
pub fn energies_to_bin_magnitudes(energies: &Array2<f64>, edges: &[usize]) -> Array2<f64> {
    let frames = energies.nrows();
    let bins = *edges.last().expect("non-empty edges");
    let mut mags = Array2::zeros((frames, bins));
    for f in 0..frames {
        for (i, pair) in edges.windows(2).enumerate() {
            let mag = energies[[f, i]].sqrt();
            for b in pair[0]..pair[1] {
                mags[[f, b]] = mag;
            }
        }
    }
    mags
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_band_round_trip() {
        // A band 3.9 dB below the norm at a 2 dB step lands on code for
        // -4 dB: one cell below the reference.
        let norm = 10.0 * 0.5f64.log10(); // arbitrary non-trivial norm
        let e = 10.0f64.powf((norm - 3.9) / 10.0);
        let pooled = Array2::from_elem((1, 1), e);
        let codes = quantize_block(&pooled, norm, 2.0, -80.0);
        assert_eq!(codes[[0, 0]], 3); // index -2
        let back = dequantize_block(&codes, norm, 2.0);
        let rel = 10.0 * back[[0, 0]].log10() - norm;
        assert!((rel - (-4.0)).abs() < 1e-12, "rel {rel}");
    }

    #[test]
    fn silence_stays_silent() {
        let pooled = Array2::from_elem((2, 3), 0.0);
        assert_eq!(norm_db(&[&pooled]), f64::NEG_INFINITY);
        let codes = quantize_block(&pooled, norm_db(&[&pooled]), 1.0, -80.0);
        assert!(codes.iter().all(|&c| c == 0));
        let back = dequantize_block(&codes, f64::NEG_INFINITY, 1.0);
        assert!(back.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn pooling_averages_band_power() {
        let mut power = Array2::zeros((1, 4));
        power[[0, 0]] = 1.0;
        power[[0, 1]] = 3.0;
        power[[0, 2]] = 5.0;
        power[[0, 3]] = 7.0;
        let pooled = pool_bands(&power, &[0, 1, 4]);
        assert_eq!(pooled[[0, 0]], 1.0);
        assert_eq!(pooled[[0, 1]], 5.0);
    }

    #[test]
    fn flat_spread_preserves_band_energy_mean() {
        let energies = Array2::from_elem((1, 2), 4.0);
        let mags = energies_to_bin_magnitudes(&energies, &[0, 2, 5]);
        assert!(mags.iter().all(|&m| m == 2.0));
    }

    proptest! {
        /// Round-trip level error for kept bands never exceeds half a step.
        #[test]
        fn round_trip_within_half_step(
            levels in prop::collection::vec(-79.0f64..0.0, 1..40),
            step in prop::sample::select(vec![0.5f64, 1.0, 2.0, 4.0]),
        ) {
            let norm = 3.21; // dB; arbitrary
            let pooled = Array2::from_shape_vec(
                (1, levels.len()),
                levels.iter().map(|l| 10.0f64.powf((l + norm) / 10.0)).collect(),
            ).unwrap();
            let codes = quantize_block(&pooled, norm, step, -80.0);
            let back = dequantize_block(&codes, norm, step);
            for (i, &l) in levels.iter().enumerate() {
                prop_assert!(codes[[0, i]] > 0, "level {l} above threshold was dropped");
                let rel = 10.0 * back[[0, i]].log10() - norm;
                prop_assert!(
                    (rel - l).abs() <= step / 2.0 + 1e-9,
                    "level {} came back as {}", l, rel
                );
            }
        }
    }
}
