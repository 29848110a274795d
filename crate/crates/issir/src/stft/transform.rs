//! Forward/inverse STFT, the consistency projection, and phase retrieval by
//! alternating magnitude snapping with that projection.
//!
//! Synthesis is weighted least squares: every frame (from every block, on
//! dual grids) overlap-adds its windowed inverse DFT into one accumulator,
//! and the result is divided by the summed squared windows. That makes
//! `istft` a left inverse of `stft`, and `project = stft . istft` an
//! idempotent linear map onto the set of consistent spectrograms.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::stft::grid::{window, Grid, GridSpec, WindowKind};
use crate::stft::spectrogram::{ComplexSpectrogram, RealSpectrogram};
use crate::Scalar;

/// Weight of a half-spectrum bin when summing over the full spectrum of a
/// real signal: interior bins stand for a conjugate pair.
fn bin_weight<T: Scalar>(bin: usize, num_bins: usize) -> T {
    if bin == 0 || bin == num_bins - 1 {
        T::one()
    } else {
        T::from_f64_c(2.0)
    }
}

/// Analyze a signal on the given grid.
pub fn stft<T: Scalar>(signal: &Signal<T>, grid: &Grid) -> Result<ComplexSpectrogram<T>> {
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    if signal.len() != grid.signal_len() || signal.sample_rate != grid.sample_rate() {
        return Err(Error::DimMismatch(format!(
            "signal of {} samples at {} Hz on a grid for {} samples at {} Hz",
            signal.len(),
            signal.sample_rate,
            grid.signal_len(),
            grid.sample_rate()
        )));
    }

    let pad = grid.pad();
    let mut padded = vec![T::zero(); grid.padded_len()];
    padded[pad..pad + signal.len()].copy_from_slice(&signal.samples);

    let mut planner = FftPlanner::<T>::new();
    let mut blocks = Vec::with_capacity(grid.num_blocks());
    for layout in grid.block_layouts() {
        let n = layout.window_len;
        let w = window::<T>(WindowKind::SqrtHann, n);
        let fft = planner.plan_fft_forward(n);
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut block = ndarray::Array2::from_elem(
            (layout.num_frames, layout.num_bins()),
            Complex::new(T::zero(), T::zero()),
        );
        for f in 0..layout.num_frames {
            let start = layout.frame_start(f);
            for i in 0..n {
                buf[i] = Complex::new(padded[start + i] * w[i], T::zero());
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (b, v) in block.row_mut(f).iter_mut().enumerate() {
                *v = buf[b];
            }
        }
        blocks.push(block);
    }
    ComplexSpectrogram::from_blocks(grid.clone(), blocks)
}

/// Synthesize a signal by weighted-least-squares overlap-add.
pub fn istft<T: Scalar>(spec: &ComplexSpectrogram<T>) -> Result<Signal<T>> {
    let grid = spec.grid();
    let padded_len = grid.padded_len();
    let mut acc = vec![T::zero(); padded_len];
    let mut den = vec![T::zero(); padded_len];

    let mut planner = FftPlanner::<T>::new();
    for (layout, block) in grid.block_layouts().iter().zip(spec.blocks()) {
        let n = layout.window_len;
        let w = window::<T>(WindowKind::SqrtHann, n);
        let inv = planner.plan_fft_inverse(n);
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); inv.get_inplace_scratch_len()];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let inv_n = T::one() / T::from_f64_c(n as f64);
        for f in 0..layout.num_frames {
            let row = block.row(f);
            buf[..layout.num_bins()].copy_from_slice(row.as_slice().expect("contiguous row"));
            for b in 1..n / 2 {
                buf[n - b] = row[b].conj();
            }
            inv.process_with_scratch(&mut buf, &mut scratch);
            let start = layout.frame_start(f);
            for i in 0..n {
                acc[start + i] += buf[i].re * inv_n * w[i];
                den[start + i] += w[i] * w[i];
            }
        }
    }

    let pad = grid.pad();
    let samples = (pad..pad + grid.signal_len())
        .map(|p| acc[p] / den[p])
        .collect();
    Ok(Signal::new(samples, grid.sample_rate()))
}

/// Project onto the set of consistent spectrograms (those that are the STFT
/// of some signal): synthesize, then re-analyze.
pub fn project<T: Scalar>(spec: &ComplexSpectrogram<T>) -> Result<ComplexSpectrogram<T>> {
    stft(&istft(spec)?, spec.grid())
}

/// Normalized squared magnitude mismatch between an estimate and a target
/// magnitude spectrogram. Terms are weighted so the sum runs over the full
/// conjugate-symmetric spectrum of each frame, scaled by 1/window per block;
/// under that metric the phase-retrieval iteration can only decrease it.
pub fn gl_objective<T: Scalar>(
    estimate: &ComplexSpectrogram<T>,
    target: &RealSpectrogram<T>,
) -> Result<T> {
    if estimate.grid() != target.grid() {
        return Err(Error::DimMismatch(
            "objective arguments live on different grids".into(),
        ));
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for ((layout, est), mag) in estimate
        .grid()
        .block_layouts()
        .iter()
        .zip(estimate.blocks())
        .zip(target.blocks())
    {
        let num_bins = layout.num_bins();
        let block_weight = T::one() / T::from_f64_c(layout.window_len as f64);
        for (((_, b), z), &m) in est.indexed_iter().zip(mag.iter()) {
            let w = block_weight * bin_weight::<T>(b, num_bins);
            let diff = z.norm() - m;
            num += w * diff * diff;
            den += w * m * m;
        }
    }
    if den == T::zero() {
        return Err(Error::DegenerateObjective);
    }
    Ok(num / den)
}

/// Result of a phase-retrieval run.
#[derive(Debug, Clone)]
pub struct GriffinLimRun<T> {
    /// Final estimate, with the target magnitudes re-imposed.
    pub estimate: ComplexSpectrogram<T>,
    /// Objective after each consistency projection, one entry per iteration.
    pub objectives: Vec<T>,
}

/// Recover phases for a target magnitude spectrogram by alternating the
/// consistency projection with magnitude snapping, starting from the given
/// initial phases.
pub fn griffin_lim<T: Scalar>(
    target: &RealSpectrogram<T>,
    init_phase: &RealSpectrogram<T>,
    iterations: usize,
) -> Result<GriffinLimRun<T>> {
    let mut snapped = target.with_phase(init_phase)?;
    let mut objectives = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let consistent = project(&snapped)?;
        objectives.push(gl_objective(&consistent, target)?);
        snapped = crate::stft::spectrogram::snap_magnitudes(&consistent, target)?;
    }
    Ok(GriffinLimRun {
        estimate: snapped,
        objectives,
    })
}

/// Convenience: analyze on a fresh uniform grid built for the signal.
pub fn stft_uniform<T: Scalar>(
    signal: &Signal<T>,
    window_len: usize,
    overlap: crate::stft::grid::Overlap,
) -> Result<(GridSpec, ComplexSpectrogram<T>)> {
    let spec = GridSpec::new(window_len, overlap, signal.sample_rate, signal.len())?;
    let grid = Grid::Uniform(spec.clone());
    Ok((spec, stft(signal, &grid)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::grid::{DualGridSpec, Overlap};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, rate: u32, seed: u64) -> Signal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate)
    }

    fn uniform_grid(window: usize, overlap: Overlap, len: usize) -> Grid {
        Grid::Uniform(GridSpec::new(window, overlap, 8_000, len).unwrap())
    }

    #[test]
    fn zero_signal_analyzes_to_zero() {
        let grid = uniform_grid(16, Overlap::Half, 100);
        let spec = stft(&Signal::<f64>::zeros(100, 8_000), &grid).unwrap();
        assert!(spec.blocks().iter().all(|b| b.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn istft_inverts_stft() {
        for overlap in [Overlap::Half, Overlap::ThreeQuarters] {
            let x = noise(1_000, 8_000, 1);
            let grid = uniform_grid(64, overlap, x.len());
            let back = istft(&stft(&x, &grid).unwrap()).unwrap();
            let err = x
                .samples
                .iter()
                .zip(&back.samples)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-12, "overlap {overlap:?}: {err}");
        }
    }

    #[test]
    fn istft_inverts_stft_on_dual_grid() {
        let x = noise(3_000, 8_000, 2);
        let large = GridSpec::new(256, Overlap::Half, 8_000, x.len()).unwrap();
        let dual = DualGridSpec::new(large, 64, vec![3, 12]).unwrap();
        let grid = Grid::Dual(dual);
        let back = istft(&stft(&x, &grid).unwrap()).unwrap();
        let err = x
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn projection_is_idempotent() {
        let grids = [
            uniform_grid(64, Overlap::Half, 500),
            Grid::Dual(
                DualGridSpec::new(
                    GridSpec::new(256, Overlap::ThreeQuarters, 8_000, 3_000).unwrap(),
                    64,
                    vec![2, 11],
                )
                .unwrap(),
            ),
        ];
        for grid in grids {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut arbitrary = ComplexSpectrogram::<f64>::zeros(grid.clone());
            for block in arbitrary.blocks_mut() {
                for z in block.iter_mut() {
                    *z = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            let once = project(&arbitrary).unwrap();
            let twice = project(&once).unwrap();
            let drift = once.max_abs_diff(&twice).unwrap();
            assert!(drift < 1e-12, "projection drifted by {drift}");
        }
    }

    /// Independent frequency-domain oracle: one interior frame of a pure tone
    /// must match a direct O(N^2) DFT of the same windowed segment, with the
    /// peak bin at round(freq * window / rate).
    #[test]
    fn matches_direct_dft_for_pure_tone() {
        let rate = 44_100u32;
        let win = 2_048usize;
        let freq = 1_000.0f64;
        let len = 3 * win;
        let x = Signal::new(
            (0..len)
                .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / rate as f64).sin())
                .collect::<Vec<f64>>(),
            rate,
        );
        let spec = GridSpec::new(win, Overlap::Half, rate, x.len()).unwrap();
        let grid = Grid::Uniform(spec.clone());
        let s = stft(&x, &grid).unwrap();

        // Frame 4 starts at padded position 4 * hop = 2 * win, i.e. sample
        // win of the signal: fully interior.
        let frame = 4usize;
        let seg_start = frame * spec.hop - spec.pad();
        let w = window::<f64>(WindowKind::SqrtHann, win);
        let row = s.blocks()[0].row(frame);
        let mut peak_bin = 0;
        let mut peak_mag = 0.0;
        for b in 0..spec.num_bins() {
            let mut direct = Complex::new(0.0, 0.0);
            for (t, &wt) in w.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (b * t) as f64 / win as f64;
                direct += Complex::from_polar(x.samples[seg_start + t] * wt, ang);
            }
            assert!(
                (row[b] - direct).norm() <= 1e-8 * direct.norm().max(1.0),
                "bin {b}: fft {} vs direct {}",
                row[b],
                direct
            );
            if row[b].norm() > peak_mag {
                peak_mag = row[b].norm();
                peak_bin = b;
            }
        }
        let expected = (freq * win as f64 / rate as f64).round() as usize;
        assert_eq!(peak_bin, expected);
    }

    #[test]
    fn objective_examples() {
        let grid = uniform_grid(16, Overlap::Half, 64);
        let x = noise(64, 8_000, 4);
        let s = stft(&x, &grid).unwrap();
        let target = s.magnitude();
        assert_relative_eq!(gl_objective(&s, &target).unwrap(), 0.0);
        assert_relative_eq!(
            gl_objective(&s.scale(2.0), &target).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        let zeros = RealSpectrogram::<f64>::zeros(grid);
        assert!(matches!(
            gl_objective(&s, &zeros),
            Err(Error::DegenerateObjective)
        ));
    }

    #[test]
    fn true_phase_is_a_fixed_point() {
        let x = noise(400, 8_000, 5);
        let grid = uniform_grid(32, Overlap::Half, x.len());
        let s = stft(&x, &grid).unwrap();
        let run = griffin_lim(&s.magnitude(), &s.phase(), 5).unwrap();
        for (k, &obj) in run.objectives.iter().enumerate() {
            assert!(obj < 1e-24, "iteration {k}: objective {obj}");
        }
        let drift = run.estimate.max_abs_diff(&s).unwrap();
        assert!(drift < 1e-10, "estimate drifted by {drift}");
    }

    #[test]
    fn objective_is_monotone_from_arbitrary_phase() {
        let x = noise(600, 8_000, 6);
        let grid = uniform_grid(32, Overlap::ThreeQuarters, x.len());
        let s = stft(&x, &grid).unwrap();
        let zero_phase = RealSpectrogram::zeros(grid);
        let run = griffin_lim(&s.magnitude(), &zero_phase, 30).unwrap();
        for pair in run.objectives.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "objective rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
        assert!(run.objectives[0] > 0.0);
    }
}
