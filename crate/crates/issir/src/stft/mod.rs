//! Short-time Fourier analysis and synthesis on uniform and dual-resolution
//! grids, plus the consistency projection used by all iterative
//! reconstruction in this crate.

mod grid;
mod spectrogram;
mod transform;

pub use grid::{window, BlockLayout, DualGridSpec, Grid, GridSpec, Overlap, WindowKind};
pub use spectrogram::{snap_magnitudes, ComplexSpectrogram, RealSpectrogram};
pub use transform::{
    gl_objective, griffin_lim, istft, project, stft, stft_uniform, GriffinLimRun,
};
