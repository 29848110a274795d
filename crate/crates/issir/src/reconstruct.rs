//! Source reconstruction from a mixture plus per-source spectral side info.
//!
//! Three layers live here:
//!
//! * oracle Wiener filtering — per-bin power fractions of the true sources
//!   applied to the mixture spectrogram;
//! * MISI — iterative phase recovery for several sources at once, feeding the
//!   remix error (mixture minus summed estimates) back equally into every
//!   source and re-imposing known magnitudes each pass;
//! * the masked remix-constrained iteration — like MISI but without magnitude
//!   re-imposition (side-info magnitudes are only approximate), with the
//!   remix error divided by a configurable divisor and gated by per-source
//!   activity masks.
//!
//! All three share one correction-step kernel, so the equivalences between
//! them hold exactly, not just approximately.

use ndarray::Array2;
use num_complex::Complex;

use crate::codec::SideInfoBundle;
use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::stft::{
    istft, project, snap_magnitudes, stft, ComplexSpectrogram, Grid, RealSpectrogram,
};
use crate::Scalar;

/// Per-bin power fractions of each source, computed from per-source power
/// spectrograms. Fractions sum to one in every bin; bins where every source
/// is silent get an equal share. The returned masks drive both Wiener
/// separation and activity detection.
pub fn wiener_masks<T: Scalar>(powers: &[RealSpectrogram<T>]) -> Result<Vec<RealSpectrogram<T>>> {
    let first = powers.first().ok_or(Error::NoSources)?;
    let mut total = first.clone();
    for p in &powers[1..] {
        total = total.zip_with(p, |a, b| a + b)?;
    }
    let equal_share = T::one() / T::from_f64_c(powers.len() as f64);
    powers
        .iter()
        .map(|p| {
            p.zip_with(&total, |num, den| {
                if den > T::zero() {
                    num / den
                } else {
                    equal_share
                }
            })
        })
        .collect()
}

/// Apply per-source masks to a mixture spectrogram and synthesize each
/// source. With masks from `wiener_masks` this is oracle Wiener filtering;
/// because the masks sum to one, the separated signals sum back to the
/// mixture's own synthesis exactly (up to rounding).
pub fn wiener_separate<T: Scalar>(
    mix: &ComplexSpectrogram<T>,
    masks: &[RealSpectrogram<T>],
) -> Result<Vec<Signal<T>>> {
    if masks.is_empty() {
        return Err(Error::NoSources);
    }
    masks
        .iter()
        .map(|mask| istft(&mix.gained(mask)?))
        .collect()
}

/// Oracle Wiener baseline straight from time-domain references.
pub fn oracle_wiener<T: Scalar>(
    mix: &Signal<T>,
    references: &[Signal<T>],
    grid: &Grid,
) -> Result<Vec<Signal<T>>> {
    let powers = references
        .iter()
        .map(|r| Ok(stft(r, grid)?.power()))
        .collect::<Result<Vec<_>>>()?;
    let masks = wiener_masks(&powers)?;
    wiener_separate(&stft(mix, grid)?, &masks)
}

/// Remix error: mixture spectrogram minus the sum of the current estimates.
pub fn remix_error<T: Scalar>(
    mix: &ComplexSpectrogram<T>,
    estimates: &[ComplexSpectrogram<T>],
) -> Result<ComplexSpectrogram<T>> {
    mix.sub(&ComplexSpectrogram::sum_sources(estimates)?)
}

/// Binary per-source activity pattern on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMask {
    grid: Grid,
    blocks: Vec<Array2<bool>>,
}

impl ActivityMask {
    pub fn all_active(grid: Grid) -> Self {
        let blocks = grid
            .block_layouts()
            .iter()
            .map(|l| Array2::from_elem((l.num_frames, l.num_bins()), true))
            .collect();
        Self { grid, blocks }
    }

    /// Build a mask from explicit per-block bin flags, validating shapes.
    pub fn from_blocks(grid: Grid, blocks: Vec<Array2<bool>>) -> Result<Self> {
        let layouts = grid.block_layouts();
        if blocks.len() != layouts.len() {
            return Err(Error::DimMismatch(format!(
                "{} mask blocks for a grid with {} blocks",
                blocks.len(),
                layouts.len()
            )));
        }
        for (block, layout) in blocks.iter().zip(layouts.iter()) {
            if block.dim() != (layout.num_frames, layout.num_bins()) {
                return Err(Error::DimMismatch(format!(
                    "mask block is {:?}, grid block is {:?}",
                    block.dim(),
                    (layout.num_frames, layout.num_bins())
                )));
            }
        }
        Ok(Self { grid, blocks })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn blocks(&self) -> &[Array2<bool>] {
        &self.blocks
    }

    /// Zero the estimate outside the active region.
    pub fn apply<T: Scalar>(&self, spec: &ComplexSpectrogram<T>) -> Result<ComplexSpectrogram<T>> {
        if spec.grid() != &self.grid {
            return Err(Error::DimMismatch(
                "activity mask lives on a different grid".into(),
            ));
        }
        let blocks = spec
            .blocks()
            .iter()
            .zip(&self.blocks)
            .map(|(z, keep)| {
                let mut out = z.clone();
                out.zip_mut_with(keep, |v, &k| {
                    if !k {
                        *v = Complex::new(T::zero(), T::zero());
                    }
                });
                out
            })
            .collect();
        ComplexSpectrogram::from_blocks(self.grid.clone(), blocks)
    }

    /// True if every bin active here is also active in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.iter().zip(b.iter()).all(|(&x, &y)| !x || y))
    }

    /// Fraction of bins marked active.
    pub fn density(&self) -> f64 {
        let total: usize = self.blocks.iter().map(|b| b.len()).sum();
        let active: usize = self
            .blocks
            .iter()
            .map(|b| b.iter().filter(|&&v| v).count())
            .sum();
        active as f64 / total as f64
    }
}

/// Threshold per-source power fractions into activity masks: a source is
/// active in a bin when its fraction strictly exceeds `threshold`. A higher
/// threshold always yields a subset of a lower one.
pub fn activity_masks<T: Scalar>(
    fractions: &[RealSpectrogram<T>],
    threshold: T,
) -> Result<Vec<ActivityMask>> {
    if fractions.is_empty() {
        return Err(Error::NoSources);
    }
    Ok(fractions
        .iter()
        .map(|f| ActivityMask {
            grid: f.grid().clone(),
            blocks: f
                .blocks()
                .iter()
                .map(|b| b.mapv(|v| v > threshold))
                .collect(),
        })
        .collect())
}

/// Per-bin count of active sources across a mask set.
fn active_counts(masks: &[ActivityMask]) -> Vec<Array2<u32>> {
    let mut counts: Vec<Array2<u32>> = masks[0]
        .blocks
        .iter()
        .map(|b| Array2::zeros(b.dim()))
        .collect();
    for mask in masks {
        for (count, block) in counts.iter_mut().zip(&mask.blocks) {
            count.zip_mut_with(block, |c, &active| {
                if active {
                    *c += 1;
                }
            });
        }
    }
    counts
}

/// How the remix error is divided before being fed back into each source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDivisor {
    /// A fixed constant, independent of the bin.
    Fixed(f64),
    /// The number of sources active in the receiving bin.
    ActiveCount,
}

/// Reconstruction configuration for [`issir_iterate`] and
/// [`issir_reconstruct`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconParams {
    /// Divisor applied to the remix error before distribution.
    pub divisor: ErrorDivisor,
    /// Gate estimates by per-source activity masks. When false, every source
    /// is treated as active everywhere.
    pub use_activity: bool,
    /// Activity threshold on the per-bin power fraction.
    pub activity_threshold: f64,
    /// Number of correction iterations.
    pub iterations: usize,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self::fixed_divisor(40.0)
    }
}

impl ReconParams {
    /// Fixed error divisor with activity gating.
    pub fn fixed_divisor(divisor: f64) -> Self {
        Self {
            divisor: ErrorDivisor::Fixed(divisor),
            use_activity: true,
            activity_threshold: 0.01,
            iterations: 50,
        }
    }

    /// Per-bin active-count divisor with activity gating.
    pub fn active_count() -> Self {
        Self {
            divisor: ErrorDivisor::ActiveCount,
            ..Self::fixed_divisor(0.0)
        }
    }

    /// Per-bin count divisor without activity gating; with magnitude
    /// snapping applied after each pass this is exactly MISI.
    pub fn unmasked() -> Self {
        Self {
            divisor: ErrorDivisor::ActiveCount,
            use_activity: false,
            ..Self::fixed_divisor(0.0)
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_activity_threshold(mut self, threshold: f64) -> Self {
        self.activity_threshold = threshold;
        self
    }
}

/// One remix-constrained correction pass, shared by MISI and the masked
/// iteration so that their documented equivalence is exact.
///
/// Per source: project the estimate onto the consistent set, add the remix
/// error divided by the divisor, gate by the activity mask, and (for MISI)
/// re-impose the target magnitudes.
fn correction_step<T: Scalar>(
    mix: &ComplexSpectrogram<T>,
    estimates: &mut [ComplexSpectrogram<T>],
    masks: &[ActivityMask],
    counts: &[Array2<u32>],
    divisor: ErrorDivisor,
    snap_to: Option<&[RealSpectrogram<T>]>,
) -> Result<()> {
    let error = remix_error(mix, estimates)?;
    for (j, estimate) in estimates.iter_mut().enumerate() {
        let projected = project(estimate)?;
        let mut corrected = projected;
        for ((block, err), (mask, count)) in corrected
            .blocks_mut()
            .iter_mut()
            .zip(error.blocks())
            .zip(masks[j].blocks.iter().zip(counts))
        {
            ndarray::Zip::from(block)
                .and(err)
                .and(mask)
                .and(count)
                .for_each(|v, &e, &active, &n| {
                    if active {
                        let d = match divisor {
                            ErrorDivisor::Fixed(d) => T::from_f64_c(d),
                            ErrorDivisor::ActiveCount => T::from_f64_c(n as f64),
                        };
                        *v += e / d;
                    } else {
                        *v = Complex::new(T::zero(), T::zero());
                    }
                });
        }
        *estimate = match snap_to {
            Some(mags) => snap_magnitudes(&corrected, &mags[j])?,
            None => corrected,
        };
    }
    Ok(())
}

/// Multi-source iterative phase recovery with exact magnitudes: estimates are
/// initialized as the target magnitudes under the mixture's phase, then each
/// pass feeds back an equal share of the remix error, projects, and snaps
/// back to the target magnitudes.
pub fn misi<T: Scalar>(
    mix: &ComplexSpectrogram<T>,
    magnitudes: &[RealSpectrogram<T>],
    iterations: usize,
) -> Result<Vec<ComplexSpectrogram<T>>> {
    if magnitudes.is_empty() {
        return Err(Error::NoSources);
    }
    let phase = mix.phase();
    let mut estimates = magnitudes
        .iter()
        .map(|m| m.with_phase(&phase))
        .collect::<Result<Vec<_>>>()?;
    let masks = vec![ActivityMask::all_active(mix.grid().clone()); magnitudes.len()];
    let counts = active_counts(&masks);
    for _ in 0..iterations {
        correction_step(
            mix,
            &mut estimates,
            &masks,
            &counts,
            ErrorDivisor::ActiveCount,
            Some(magnitudes),
        )?;
    }
    Ok(estimates)
}

/// Run `params.iterations` masked remix-constrained correction passes on the
/// given initial estimates. The caller provides activity masks; estimates are
/// expected to already be zero outside their masks (the iteration keeps them
/// that way).
pub fn issir_iterate<T: Scalar>(
    mix: &ComplexSpectrogram<T>,
    mut estimates: Vec<ComplexSpectrogram<T>>,
    masks: &[ActivityMask],
    params: &ReconParams,
) -> Result<Vec<ComplexSpectrogram<T>>> {
    if estimates.is_empty() {
        return Err(Error::NoSources);
    }
    if estimates.len() != masks.len() {
        return Err(Error::DimMismatch(format!(
            "{} estimates but {} activity masks",
            estimates.len(),
            masks.len()
        )));
    }
    for item in estimates.iter().map(|e| e.grid()).chain(masks.iter().map(|m| m.grid())) {
        if item != mix.grid() {
            return Err(Error::DimMismatch(
                "estimates and masks must share the mixture's grid".into(),
            ));
        }
    }
    let counts = active_counts(masks);
    for _ in 0..params.iterations {
        correction_step(mix, &mut estimates, masks, &counts, params.divisor, None)?;
    }
    Ok(estimates)
}

/// Redistribute each band's template energy across its bins following the
/// mixture's own intra-band magnitude profile, preserving the band energy.
/// The transmitted data fixes how much energy a band holds but says nothing
/// about where inside the band it sits; the mixture is the best available
/// witness for that fine structure. Single-bin bands are left bit-identical,
/// and a band where the mixture is silent keeps the flat fill.
fn shape_templates_by_mixture<T: Scalar>(
    templates: &mut [RealSpectrogram<T>],
    mix: &ComplexSpectrogram<T>,
    edges_per_block: &[Vec<usize>],
) {
    for template in templates.iter_mut() {
        for ((block, mix_block), edges) in
            template.blocks_mut().iter_mut().zip(mix.blocks()).zip(edges_per_block)
        {
            for (frame, mix_frame) in block.rows_mut().into_iter().zip(mix_block.rows()) {
                let mut frame = frame;
                for w in edges.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    if hi - lo < 2 {
                        continue;
                    }
                    let band_energy = (lo..hi)
                        .map(|k| frame[k] * frame[k])
                        .fold(T::zero(), |a, b| a + b);
                    let mix_energy = (lo..hi)
                        .map(|k| mix_frame[k].norm_sqr())
                        .fold(T::zero(), |a, b| a + b);
                    if mix_energy <= T::zero() || band_energy <= T::zero() {
                        continue;
                    }
                    let gain = (band_energy / mix_energy).sqrt();
                    for k in lo..hi {
                        frame[k] = mix_frame[k].norm() * gain;
                    }
                }
            }
        }
    }
}

/// Full decoder-side reconstruction: rebuild the grid, per-source magnitude
/// templates, and transmitted activity masks from a side-info bundle;
/// initialize each source as its template under the mixture's phase, gated
/// by its mask; iterate; and synthesize the mask-gated final estimates.
///
/// Band-pooled templates are first re-shaped inside each band to follow the
/// mixture's fine spectral structure (see [`shape_templates_by_mixture`]).
///
/// With `params.use_activity` off the transmitted masks are ignored and
/// every source is treated as active everywhere.
pub fn issir_reconstruct<T: Scalar>(
    mix: &Signal<T>,
    bundle: &SideInfoBundle,
    params: &ReconParams,
) -> Result<Vec<Signal<T>>> {
    let grid = bundle.grid()?;
    let mut templates: Vec<RealSpectrogram<T>> = bundle.magnitudes()?;
    let mix_spec = stft(mix, &grid)?;
    shape_templates_by_mixture(&mut templates, &mix_spec, &bundle.edges_per_block(&grid)?);

    let masks = if params.use_activity {
        bundle.activity_masks()?
    } else {
        vec![ActivityMask::all_active(grid.clone()); templates.len()]
    };

    let phase = mix_spec.phase();
    let init = templates
        .iter()
        .zip(&masks)
        .map(|(m, mask)| mask.apply(&m.with_phase(&phase)?))
        .collect::<Result<Vec<_>>>()?;

    let estimates = issir_iterate(&mix_spec, init, &masks, params)?;
    estimates
        .iter()
        .zip(&masks)
        .map(|(e, mask)| istft(&mask.apply(e)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{GridSpec, Overlap};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Signal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8_000)
    }

    fn tone(len: usize, freq: f64) -> Signal<f64> {
        Signal::new(
            (0..len)
                .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / 8_000.0).sin())
                .collect(),
            8_000,
        )
    }

    fn test_grid(len: usize) -> Grid {
        Grid::Uniform(GridSpec::new(64, Overlap::Half, 8_000, len).unwrap())
    }

    #[test]
    fn wiener_masks_sum_to_one() {
        let grid = test_grid(500);
        let sources = [noise(500, 10), tone(500, 440.0), noise(500, 11)];
        let powers: Vec<_> = sources
            .iter()
            .map(|s| stft(s, &grid).unwrap().power())
            .collect();
        let masks = wiener_masks(&powers).unwrap();
        let mut total = masks[0].clone();
        for m in &masks[1..] {
            total = total.zip_with(m, |a, b| a + b).unwrap();
        }
        for block in total.blocks() {
            for &v in block.iter() {
                assert!((v - 1.0).abs() <= 3.0 * f64::EPSILON, "mask sum {v}");
            }
        }
    }

    #[test]
    fn wiener_estimates_remix_to_mixture() {
        let sources = [tone(800, 300.0), noise(800, 12)];
        let mix = Signal::mix(&sources);
        let grid = test_grid(800);
        let estimates = oracle_wiener(&mix, &sources, &grid).unwrap();
        let remixed = Signal::mix(&estimates);
        let err = mix
            .samples
            .iter()
            .zip(&remixed.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "remix error {err}");
    }

    #[test]
    fn activity_masks_nest_with_threshold() {
        let grid = test_grid(500);
        let sources = [tone(500, 200.0), noise(500, 13)];
        let powers: Vec<_> = sources
            .iter()
            .map(|s| stft(s, &grid).unwrap().power())
            .collect();
        let fractions = wiener_masks(&powers).unwrap();
        let loose = activity_masks(&fractions, 0.01).unwrap();
        let tight = activity_masks(&fractions, 0.1).unwrap();
        for (t, l) in tight.iter().zip(&loose) {
            assert!(t.is_subset_of(l));
            assert!(t.density() <= l.density());
        }
    }

    #[test]
    fn misi_with_true_magnitudes_improves_on_mixture_phase() {
        let sources = [tone(1_200, 500.0), tone(1_200, 1_700.0)];
        let mix = Signal::mix(&sources);
        let grid = test_grid(1_200);
        let mix_spec = stft(&mix, &grid).unwrap();
        let mags: Vec<_> = sources
            .iter()
            .map(|s| stft(s, &grid).unwrap().magnitude())
            .collect();

        let err_of = |estimates: &[ComplexSpectrogram<f64>]| -> f64 {
            estimates
                .iter()
                .zip(&sources)
                .map(|(e, s)| {
                    let rec = istft(e).unwrap();
                    rec.samples
                        .iter()
                        .zip(&s.samples)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum()
        };

        let start = misi(&mix_spec, &mags, 0).unwrap();
        let done = misi(&mix_spec, &mags, 25).unwrap();
        assert!(
            err_of(&done) < 0.5 * err_of(&start),
            "MISI did not reduce error: {} -> {}",
            err_of(&start),
            err_of(&done)
        );
    }

    #[test]
    fn misi_equals_unmasked_iteration_with_snapping() {
        let sources = [tone(700, 400.0), noise(700, 14)];
        let mix = Signal::mix(&sources);
        let grid = test_grid(700);
        let mix_spec = stft(&mix, &grid).unwrap();
        let mags: Vec<_> = sources
            .iter()
            .map(|s| stft(s, &grid).unwrap().magnitude())
            .collect();

        let via_misi = misi(&mix_spec, &mags, 4).unwrap();

        let phase = mix_spec.phase();
        let mut manual: Vec<_> = mags.iter().map(|m| m.with_phase(&phase).unwrap()).collect();
        let masks = vec![ActivityMask::all_active(grid.clone()); 2];
        let one_pass = ReconParams::unmasked().with_iterations(1);
        for _ in 0..4 {
            manual = issir_iterate(&mix_spec, manual, &masks, &one_pass).unwrap();
            manual = manual
                .iter()
                .zip(&mags)
                .map(|(e, m)| snap_magnitudes(e, m).unwrap())
                .collect();
        }

        for (a, b) in via_misi.iter().zip(&manual) {
            assert_eq!(a, b, "estimates must match bit for bit");
        }
    }

    #[test]
    fn masked_iteration_keeps_inactive_bins_silent() {
        let sources = [tone(900, 250.0), tone(900, 2_300.0)];
        let mix = Signal::mix(&sources);
        let grid = test_grid(900);
        let mix_spec = stft(&mix, &grid).unwrap();
        let powers: Vec<_> = sources
            .iter()
            .map(|s| stft(s, &grid).unwrap().power())
            .collect();
        let fractions = wiener_masks(&powers).unwrap();
        let masks = activity_masks(&fractions, 0.01).unwrap();
        let phase = mix_spec.phase();
        let init: Vec<_> = sources
            .iter()
            .zip(&masks)
            .map(|(s, mask)| {
                let snapped = stft(s, &grid).unwrap().magnitude().with_phase(&phase).unwrap();
                mask.apply(&snapped).unwrap()
            })
            .collect();
        let out = issir_iterate(
            &mix_spec,
            init,
            &masks,
            &ReconParams::fixed_divisor(40.0).with_iterations(8),
        )
        .unwrap();
        for (est, mask) in out.iter().zip(&masks) {
            for (block, keep) in est.blocks().iter().zip(mask.blocks()) {
                for (z, &k) in block.iter().zip(keep.iter()) {
                    if !k {
                        assert_eq!(z.norm(), 0.0, "inactive bin became non-zero");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_active_sources_distributes_nothing() {
        let grid = test_grid(300);
        let mix = stft(&noise(300, 15), &grid).unwrap();
        // One source, active nowhere: the estimate must stay all zero and no
        // NaN may appear even with a count divisor.
        let masks = activity_masks(&[RealSpectrogram::<f64>::zeros(grid.clone())], 0.5).unwrap();
        let init = vec![ComplexSpectrogram::zeros(grid.clone())];
        let out = issir_iterate(
            &mix,
            init,
            &masks,
            &ReconParams::active_count().with_iterations(3),
        )
        .unwrap();
        for block in out[0].blocks() {
            for z in block.iter() {
                assert!(z.re == 0.0 && z.im == 0.0);
                assert!(!z.re.is_nan() && !z.im.is_nan());
            }
        }
    }

    #[test]
    fn mismatched_mask_count_is_error() {
        let grid = test_grid(300);
        let mix = stft(&noise(300, 16), &grid).unwrap();
        let init = vec![ComplexSpectrogram::zeros(grid.clone()); 2];
        let masks = vec![ActivityMask::all_active(grid)];
        assert!(matches!(
            issir_iterate(&mix, init, &masks, &ReconParams::default()),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn equal_share_in_all_silent_bins() {
        let grid = test_grid(200);
        let zero = RealSpectrogram::<f64>::zeros(grid.clone());
        let masks = wiener_masks(&[zero.clone(), zero.clone(), zero]).unwrap();
        for m in &masks {
            for block in m.blocks() {
                for &v in block.iter() {
                    assert_relative_eq!(v, 1.0 / 3.0);
                }
            }
        }
    }
}
