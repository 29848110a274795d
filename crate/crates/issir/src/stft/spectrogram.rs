//! Block-structured spectrogram containers.
//!
//! A spectrogram owns one `(frames x bins)` matrix per grid block, so uniform
//! and dual-resolution data flow through the same elementwise code. Bins hold
//! the non-redundant half spectrum (`window/2 + 1` per frame).

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::stft::grid::Grid;
use crate::Scalar;

/// Complex STFT coefficients on a uniform or dual grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    grid: Grid,
    blocks: Vec<Array2<Complex<T>>>,
}

/// Real-valued data (magnitudes, powers, masks) on the same block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrogram<T> {
    grid: Grid,
    blocks: Vec<Array2<T>>,
}

fn block_dims(grid: &Grid) -> Vec<(usize, usize)> {
    grid.block_layouts()
        .iter()
        .map(|l| (l.num_frames, l.num_bins()))
        .collect()
}

impl<T: Scalar> ComplexSpectrogram<T> {
    pub fn from_blocks(grid: Grid, blocks: Vec<Array2<Complex<T>>>) -> Result<Self> {
        let dims = block_dims(&grid);
        if blocks.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "{} blocks for a grid with {}",
                blocks.len(),
                dims.len()
            )));
        }
        for (b, (block, &dim)) in blocks.iter().zip(&dims).enumerate() {
            if block.dim() != dim {
                return Err(Error::DimMismatch(format!(
                    "block {b} is {:?}, grid wants {dim:?}",
                    block.dim()
                )));
            }
        }
        Ok(Self { grid, blocks })
    }

    pub fn zeros(grid: Grid) -> Self {
        let blocks = block_dims(&grid)
            .into_iter()
            .map(|d| Array2::from_elem(d, Complex::new(T::zero(), T::zero())))
            .collect();
        Self { grid, blocks }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn blocks(&self) -> &[Array2<Complex<T>>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Array2<Complex<T>>] {
        &mut self.blocks
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DimMismatch(
                "spectrograms live on different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn magnitude(&self) -> RealSpectrogram<T> {
        RealSpectrogram {
            grid: self.grid.clone(),
            blocks: self.blocks.iter().map(|b| b.mapv(|z| z.norm())).collect(),
        }
    }

    pub fn power(&self) -> RealSpectrogram<T> {
        RealSpectrogram {
            grid: self.grid.clone(),
            blocks: self.blocks.iter().map(|b| b.mapv(|z| z.norm_sqr())).collect(),
        }
    }

    pub fn phase(&self) -> RealSpectrogram<T> {
        RealSpectrogram {
            grid: self.grid.clone(),
            blocks: self.blocks.iter().map(|b| b.mapv(|z| z.arg())).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            blocks,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            blocks,
        })
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            grid: self.grid.clone(),
            blocks: self.blocks.iter().map(|b| b.mapv(|z| z * factor)).collect(),
        }
    }

    /// Multiply each coefficient by a real gain.
    pub fn gained(&self, gain: &RealSpectrogram<T>) -> Result<Self> {
        if self.grid != gain.grid {
            return Err(Error::DimMismatch(
                "gain lives on a different grid".into(),
            ));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&gain.blocks)
            .map(|(z, g)| {
                let mut out = z.clone();
                out.zip_mut_with(g, |v, &w| *v *= w);
                out
            })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            blocks,
        })
    }

    /// Sum of per-coefficient squared magnitudes (no conjugate-bin weighting).
    pub fn energy(&self) -> T {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|z| z.norm_sqr()).sum::<T>())
            .sum()
    }

    /// Largest absolute difference (in magnitude of the complex difference).
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_grid(other)?;
        let mut worst = T::zero();
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).norm());
            }
        }
        Ok(worst)
    }

    pub fn sum_sources(sources: &[Self]) -> Result<Self> {
        let first = sources.first().ok_or(Error::NoSources)?;
        let mut total = first.clone();
        for s in &sources[1..] {
            total = total.add(s)?;
        }
        Ok(total)
    }
}

impl<T: Scalar> RealSpectrogram<T> {
    pub fn from_blocks(grid: Grid, blocks: Vec<Array2<T>>) -> Result<Self> {
        let dims = block_dims(&grid);
        if blocks.len() != dims.len()
            || blocks.iter().zip(&dims).any(|(b, &d)| b.dim() != d)
        {
            return Err(Error::DimMismatch(
                "real blocks do not match grid layout".into(),
            ));
        }
        Ok(Self { grid, blocks })
    }

    pub fn zeros(grid: Grid) -> Self {
        let blocks = block_dims(&grid)
            .into_iter()
            .map(|d| Array2::from_elem(d, T::zero()))
            .collect();
        Self { grid, blocks }
    }

    pub fn constant(grid: Grid, value: T) -> Self {
        let blocks = block_dims(&grid)
            .into_iter()
            .map(|d| Array2::from_elem(d, value))
            .collect();
        Self { grid, blocks }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn blocks(&self) -> &[Array2<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.blocks
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            blocks: self.blocks.iter().map(|b| b.mapv(&f)).collect(),
        }
    }

    pub fn zip_with<F: Fn(T, T) -> T>(&self, other: &Self, f: F) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::DimMismatch(
                "real spectrograms live on different grids".into(),
            ));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let mut out = a.clone();
                out.zip_mut_with(b, |v, &w| *v = f(*v, w));
                out
            })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            blocks,
        })
    }

    pub fn max_value(&self) -> T {
        self.blocks
            .iter()
            .flat_map(|b| b.iter().copied())
            .fold(T::zero(), T::max)
    }

    /// Complex spectrogram `self * exp(i * phase)`, taking magnitudes from
    /// `self` and angles elementwise from `phase`.
    pub fn with_phase(&self, phase: &RealSpectrogram<T>) -> Result<ComplexSpectrogram<T>> {
        if self.grid != phase.grid {
            return Err(Error::DimMismatch("phase lives on a different grid".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&phase.blocks)
            .map(|(m, p)| {
                let mut out = Array2::from_elem(m.dim(), Complex::new(T::zero(), T::zero()));
                ndarray::Zip::from(&mut out)
                    .and(m)
                    .and(p)
                    .for_each(|z, &mag, &ang| *z = Complex::from_polar(mag, ang));
                out
            })
            .collect();
        ComplexSpectrogram::from_blocks(self.grid.clone(), blocks)
    }
}

/// Keep each coefficient's phase but impose the given magnitudes. Where a
/// coefficient is exactly zero its phase is taken as zero, so the output
/// there is the (real, non-negative) magnitude itself.
pub fn snap_magnitudes<T: Scalar>(
    estimate: &ComplexSpectrogram<T>,
    magnitudes: &RealSpectrogram<T>,
) -> Result<ComplexSpectrogram<T>> {
    if estimate.grid() != magnitudes.grid() {
        return Err(Error::DimMismatch(
            "magnitude target lives on a different grid".into(),
        ));
    }
    let blocks = estimate
        .blocks()
        .iter()
        .zip(magnitudes.blocks())
        .map(|(z, m)| {
            let mut out = z.clone();
            out.zip_mut_with(m, |v, &mag| {
                let norm = v.norm();
                *v = if norm > T::zero() {
                    *v * (mag / norm)
                } else {
                    Complex::new(mag, T::zero())
                };
            });
            out
        })
        .collect();
    ComplexSpectrogram::from_blocks(estimate.grid().clone(), blocks)
}
