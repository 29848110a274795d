//! Transient detection on the large-window grid.
//!
//! Each large frame gets a complex spectral difference score: the summed
//! magnitude deviation between the frame and a prediction that extrapolates
//! the previous frame's magnitudes with linearly advancing phase. Frames
//! whose score stands out from a sliding local baseline are flagged, flags
//! from all sources are OR-combined, and a cleanup pass enforces the minimum
//! spacing the dual-resolution grid needs.

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::stft::{stft, DualGridSpec, Grid, GridSpec};
use crate::Scalar;

/// Per-frame transient flags on a large-window grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransientTrack {
    pub flags: Vec<bool>,
    /// Index of the source this track was detected on; `None` once tracks
    /// have been combined across sources.
    pub source: Option<usize>,
}

impl TransientTrack {
    pub fn frames(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Complex spectral difference per frame: prediction error against constant
/// magnitude and linear phase advance. The first two frames have no
/// prediction context and score zero.
pub fn spectral_difference<T: Scalar>(signal: &Signal<T>, grid: &GridSpec) -> Result<Vec<T>> {
    let spec = stft(signal, &Grid::Uniform(grid.clone()))?;
    let block = &spec.blocks()[0];
    let frames = grid.num_frames;
    let mut csd = vec![T::zero(); frames];
    for t in 2..frames {
        let mut sum = T::zero();
        for b in 0..grid.num_bins() {
            let prev = block[[t - 1, b]];
            let prev2 = block[[t - 2, b]];
            let predicted_phase =
                T::from_f64_c(2.0) * prev.arg() - prev2.arg();
            let predicted = num_complex::Complex::from_polar(prev.norm(), predicted_phase);
            sum += (block[[t, b]] - predicted).norm();
        }
        csd[t] = sum;
    }
    Ok(csd)
}

fn median<T: Scalar>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::from_f64_c(2.0)
    }
}

/// Flag frames whose spectral difference exceeds a robust local baseline:
/// median plus three median absolute deviations over a one-second sliding
/// window, with an absolute floor so nothing is flagged in silence.
pub fn detect_transients<T: Scalar>(signal: &Signal<T>, grid: &GridSpec) -> Result<TransientTrack> {
    let csd = spectral_difference(signal, grid)?;
    let frames = csd.len();
    let peak = csd.iter().copied().fold(T::zero(), T::max);
    let floor = T::from_f64_c(1e-6) * peak;

    let half = ((grid.sample_rate as f64 / grid.hop as f64 / 2.0).round() as usize).max(1);
    let mut flags = vec![false; frames];
    let mut local = Vec::with_capacity(2 * half + 1);
    for t in 0..frames {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(frames);
        local.clear();
        local.extend_from_slice(&csd[lo..hi]);
        let med = median(&mut local);
        for v in local.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median(&mut local);
        let threshold = med + T::from_f64_c(3.0) * mad;
        flags[t] = csd[t] > threshold && csd[t] > floor;
    }
    Ok(TransientTrack {
        flags,
        source: None,
    })
}

/// OR-combine per-source tracks into one.
pub fn combine(tracks: &[TransientTrack]) -> Result<TransientTrack> {
    let first = tracks.first().ok_or(Error::NoSources)?;
    let mut flags = first.flags.clone();
    for t in &tracks[1..] {
        if t.flags.len() != flags.len() {
            return Err(Error::DimMismatch(format!(
                "tracks of {} and {} frames",
                flags.len(),
                t.flags.len()
            )));
        }
        for (acc, &f) in flags.iter_mut().zip(&t.flags) {
            *acc |= f;
        }
    }
    Ok(TransientTrack {
        flags,
        source: None,
    })
}

/// Greedy left-to-right cleanup: keep a flag only when it lies at least two
/// large windows (in samples) after the last kept flag. The first flag is
/// always kept; a run of consecutive flags collapses to its first frame.
pub fn clean(track: &TransientTrack, grid: &GridSpec) -> TransientTrack {
    let min_gap_frames = (2 * grid.window_len).div_ceil(grid.hop);
    let mut flags = vec![false; track.flags.len()];
    let mut last: Option<usize> = None;
    for (i, &f) in track.flags.iter().enumerate() {
        if !f {
            continue;
        }
        let ok = match last {
            None => true,
            Some(prev) => i - prev >= min_gap_frames,
        };
        if ok {
            flags[i] = true;
            last = Some(i);
        }
    }
    TransientTrack {
        flags,
        source: track.source,
    }
}

/// Build a dual-resolution grid whose small-window blocks sit on the cleaned
/// transient frames.
pub fn build_dual_grid(
    track: &TransientTrack,
    large: &GridSpec,
    small_window_len: usize,
) -> Result<DualGridSpec> {
    if track.flags.len() != large.num_frames {
        return Err(Error::DimMismatch(format!(
            "track of {} flags on a grid of {} frames",
            track.flags.len(),
            large.num_frames
        )));
    }
    DualGridSpec::new(large.clone(), small_window_len, track.frames())
}
