//! Single-channel informed source separation by iterative, activity-masked,
//! remix-constrained spectrogram inversion.
//!
//! An encoder with access to the original stems compacts per-source
//! spectrogram side information (log-quantized band energies, activity
//! masks, transient positions) to a target bit rate. A decoder reconstructs
//! the stems from the mixture plus that side information by alternating a
//! time-frequency consistency projection with a masked distribution of the
//! remixing error, on a uniform or dual-resolution STFT grid.
//!
//! Layout:
//! - [`stft`]: grids, spectrograms, analysis/synthesis, the consistency
//!   projection and Griffin-Lim iteration
//! - [`reconstruct`]: Wiener masking, MISI and the activity-masked iteration
//! - [`transient`]: per-source transient detection and the dual grid
//! - [`codec`]: side-information quantization, bitstream, rate control
//! - [`metrics`]: SDR/SIR/SAR evaluation
//! - [`fixtures`]: seeded synthetic test material

use std::fmt::Display;
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

pub mod codec;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod reconstruct;
pub mod signal;
pub mod stft;
pub mod transient;

pub use error::Error;
pub use signal::Signal;
pub use stft::{ComplexSpectrogram, DualGridSpec, Grid, GridSpec, RealSpectrogram};

/// Scalar sample type the DSP kernels are generic over: `f32` or `f64`.
pub trait Scalar: FftNum + Float + FloatConst + NumAssign + Sum<Self> + Display {
    /// Lossless conversion from `f64` for constants and configuration values.
    fn from_f64_c(v: f64) -> Self {
        Self::from(v).expect("finite constant representable in scalar type")
    }
}

impl<T> Scalar for T where T: FftNum + Float + FloatConst + NumAssign + Sum<T> + Display {}

/// Default scalar for the CLI, codec wire format and shipped fixtures.
pub type Sample = f64;

pub type Signal32 = Signal<f32>;
pub type Signal64 = Signal<f64>;
pub type Spectrogram32 = ComplexSpectrogram<f32>;
pub type Spectrogram64 = ComplexSpectrogram<f64>;
