//! STFT geometry: window/hop layout for uniform and dual-resolution grids.
//!
//! Frames live on a zero-padded copy of the signal. The pad is one full
//! window on each side, so every original sample has constant overlap-add
//! coverage; synthesis trims the pad back off. Frame `f` of a block starts
//! at `block.start + f * block.hop` in padded coordinates.

use crate::error::{Error, Result};
use crate::Scalar;

/// Analysis/synthesis window shape. The same window is used on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// Periodic square-root Hann: `w[t] = sin(pi t / N)`. Its square sums to
    /// a constant across frames at both supported overlaps.
    #[default]
    SqrtHann,
}

/// Frame advance as a fraction of the window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlap {
    /// hop = window / 2
    Half,
    /// hop = window / 4
    ThreeQuarters,
}

impl Overlap {
    pub fn hop_for(self, window_len: usize) -> usize {
        match self {
            Overlap::Half => window_len / 2,
            Overlap::ThreeQuarters => window_len / 4,
        }
    }

    pub fn windows_per_hop(self) -> usize {
        match self {
            Overlap::Half => 2,
            Overlap::ThreeQuarters => 4,
        }
    }
}

/// Uniform STFT geometry for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub window_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
    pub num_frames: usize,
    pub sample_rate: u32,
    pub signal_len: usize,
}

impl GridSpec {
    pub fn new(
        window_len: usize,
        overlap: Overlap,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        if window_len < 4 || !window_len.is_multiple_of(4) {
            return Err(Error::InvalidConfig(format!(
                "window length {window_len} must be a positive multiple of 4"
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if signal_len == 0 {
            return Err(Error::EmptyInput);
        }
        let hop = overlap.hop_for(window_len);
        // Frames cover [0, pad + signal_len) of the padded buffer; the
        // constant overlap-add region starts at window_len - hop <= pad.
        let num_frames = (window_len + signal_len).div_ceil(hop);
        Ok(Self {
            window_len,
            hop,
            window_kind: WindowKind::SqrtHann,
            num_frames,
            sample_rate,
            signal_len,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn overlap(&self) -> Overlap {
        if self.hop * 2 == self.window_len {
            Overlap::Half
        } else {
            Overlap::ThreeQuarters
        }
    }

    /// Zero padding before (and at least after) the signal, in samples.
    pub fn pad(&self) -> usize {
        self.window_len
    }

    pub fn padded_len(&self) -> usize {
        (self.num_frames - 1) * self.hop + self.window_len
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Maximum relative deviation of the squared-window overlap-add sum from
    /// its interior mean, over the region covering the original signal.
    pub fn cola_deviation<T: Scalar>(&self) -> T {
        let w: Vec<T> = window::<T>(self.window_kind, self.window_len);
        let mut sum = vec![T::zero(); self.padded_len()];
        for f in 0..self.num_frames {
            let start = f * self.hop;
            for (i, &wi) in w.iter().enumerate() {
                sum[start + i] += wi * wi;
            }
        }
        let interior = &sum[self.pad()..self.pad() + self.signal_len];
        let mean = interior.iter().copied().sum::<T>() / T::from_f64_c(interior.len() as f64);
        interior
            .iter()
            .map(|&s| ((s - mean) / mean).abs())
            .fold(T::zero(), T::max)
    }
}

/// Dual-resolution geometry: a uniform large-window grid everywhere, plus
/// small windows tiling the span of selected (transient) large frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGridSpec {
    pub large: GridSpec,
    pub small_window_len: usize,
    /// Large-frame indices that carry small-window coverage; strictly
    /// increasing and at least two large windows apart.
    pub transient_frames: Vec<usize>,
}

impl DualGridSpec {
    pub fn new(
        large: GridSpec,
        small_window_len: usize,
        transient_frames: Vec<usize>,
    ) -> Result<Self> {
        if small_window_len < 4
            || !small_window_len.is_multiple_of(4)
            || !large.window_len.is_multiple_of(small_window_len)
        {
            return Err(Error::InvalidConfig(format!(
                "small window {small_window_len} must divide large window {}",
                large.window_len
            )));
        }
        for pair in transient_frames.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidConfig(
                    "transient frames must be strictly increasing".into(),
                ));
            }
            if (pair[1] - pair[0]) * large.hop < 2 * large.window_len {
                return Err(Error::SpacingViolation(pair[0], pair[1]));
            }
        }
        if let Some(&last) = transient_frames.last() {
            if last >= large.num_frames {
                return Err(Error::InvalidConfig(format!(
                    "transient frame {last} outside grid of {} frames",
                    large.num_frames
                )));
            }
        }
        Ok(Self {
            large,
            small_window_len,
            transient_frames,
        })
    }

    /// Small-window hop, matching the large grid's overlap ratio.
    pub fn small_hop(&self) -> usize {
        self.large.overlap().hop_for(self.small_window_len)
    }

    pub fn small_num_bins(&self) -> usize {
        self.small_window_len / 2 + 1
    }

    /// Number of small frames tiling one large frame's span.
    pub fn frames_per_transient(&self) -> usize {
        (self.large.window_len - self.small_window_len) / self.small_hop() + 1
    }
}

/// A uniform grid or a dual-resolution grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Uniform(GridSpec),
    Dual(DualGridSpec),
}

/// One homogeneous group of frames: same window, same hop, consecutive
/// positions starting at `start` in padded coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub window_len: usize,
    pub hop: usize,
    pub start: usize,
    pub num_frames: usize,
}

impl BlockLayout {
    pub fn num_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn frame_start(&self, frame: usize) -> usize {
        self.start + frame * self.hop
    }
}

impl Grid {
    pub fn large(&self) -> &GridSpec {
        match self {
            Grid::Uniform(g) => g,
            Grid::Dual(d) => &d.large,
        }
    }

    pub fn signal_len(&self) -> usize {
        self.large().signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.large().sample_rate
    }

    pub fn pad(&self) -> usize {
        self.large().pad()
    }

    pub fn padded_len(&self) -> usize {
        self.large().padded_len()
    }

    /// Block 0 is the uniform/large grid; blocks 1.. are the small-window
    /// groups, one per transient frame in order.
    pub fn block_layouts(&self) -> Vec<BlockLayout> {
        match self {
            Grid::Uniform(g) => vec![BlockLayout {
                window_len: g.window_len,
                hop: g.hop,
                start: 0,
                num_frames: g.num_frames,
            }],
            Grid::Dual(d) => {
                let mut layouts = Vec::with_capacity(1 + d.transient_frames.len());
                layouts.push(BlockLayout {
                    window_len: d.large.window_len,
                    hop: d.large.hop,
                    start: 0,
                    num_frames: d.large.num_frames,
                });
                for &t in &d.transient_frames {
                    layouts.push(BlockLayout {
                        window_len: d.small_window_len,
                        hop: d.small_hop(),
                        start: t * d.large.hop,
                        num_frames: d.frames_per_transient(),
                    });
                }
                layouts
            }
        }
    }

    pub fn num_blocks(&self) -> usize {
        match self {
            Grid::Uniform(_) => 1,
            Grid::Dual(d) => 1 + d.transient_frames.len(),
        }
    }
}

impl From<GridSpec> for Grid {
    fn from(g: GridSpec) -> Self {
        Grid::Uniform(g)
    }
}

impl From<DualGridSpec> for Grid {
    fn from(d: DualGridSpec) -> Self {
        Grid::Dual(d)
    }
}

/// Sample the analysis window.
pub fn window<T: Scalar>(kind: WindowKind, len: usize) -> Vec<T> {
    match kind {
        WindowKind::SqrtHann => {
            let n = T::from_f64_c(len as f64);
            (0..len)
                .map(|t| (T::PI() * T::from_f64_c(t as f64) / n).sin())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cola_constant_at_both_overlaps() {
        for (win, overlap) in [
            (2048, Overlap::Half),
            (2048, Overlap::ThreeQuarters),
            (256, Overlap::Half),
            (256, Overlap::ThreeQuarters),
        ] {
            let g = GridSpec::new(win, overlap, 44_100, 10_000).unwrap();
            let dev: f64 = g.cola_deviation();
            assert!(dev < 1e-12, "window {win} overlap {overlap:?}: {dev}");
        }
    }

    #[test]
    fn frame_count_covers_signal() {
        let g = GridSpec::new(2048, Overlap::Half, 44_100, 44_100).unwrap();
        assert!(g.num_frames * g.hop >= g.pad() + g.signal_len);
        assert!(g.padded_len() >= g.pad() + g.signal_len);
    }

    #[test]
    fn dual_grid_small_frames_tile_host() {
        let large = GridSpec::new(2048, Overlap::Half, 44_100, 44_100).unwrap();
        let d = DualGridSpec::new(large, 256, vec![7]).unwrap();
        assert_eq!(d.frames_per_transient(), 15);
        let layouts = Grid::Dual(d.clone()).block_layouts();
        let small = layouts[1];
        assert_eq!(small.start, 7 * d.large.hop);
        let last_end = small.frame_start(small.num_frames - 1) + small.window_len;
        assert_eq!(last_end, small.start + d.large.window_len);
    }

    #[test]
    fn dual_grid_rejects_close_transients() {
        let large = GridSpec::new(2048, Overlap::Half, 44_100, 44_100).unwrap();
        let err = DualGridSpec::new(large, 256, vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::SpacingViolation(0, 1)));
    }

    #[test]
    fn empty_signal_rejected() {
        assert!(matches!(
            GridSpec::new(2048, Overlap::Half, 44_100, 0),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn three_quarter_overlap_tiling_count() {
        let large = GridSpec::new(2048, Overlap::ThreeQuarters, 44_100, 44_100).unwrap();
        let d = DualGridSpec::new(large, 256, vec![4]).unwrap();
        assert_eq!(d.small_hop(), 64);
        assert_eq!(d.frames_per_transient(), 29);
    }
}
