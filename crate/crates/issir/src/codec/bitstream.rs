//! Wire format for the side-info bundle.
//!
//! Little-endian layout: magic, version, entropy-backend id, grid and
//! quantizer parameters, the transient list, per-source norms, then one
//! entropy-compressed payload holding, per source and block, the
//! quantization codes followed by a bit-packed band-activity map. All dB
//! fields cross the wire as signed centi-dB integers and the activity
//! threshold as fixed-point millionths, so no float formatting can drift. A
//! CRC32 over all preceding bytes closes the stream.
//!
//! The decoder never trusts a length field: reads are bounds-checked, the
//! payload is decompressed under a cap derived from the validated grid, and
//! the checksum is verified before any semantic field is used.

use ndarray::Array2;

use crate::codec::bands::band_edges;
use crate::codec::quant::{dequantize_block, energies_to_bin_magnitudes, max_code};
use crate::codec::{decode_activity, entropy_decode, entropy_encode};
use crate::error::{DecodeError, Error, Result};
use crate::reconstruct::ActivityMask;
use crate::stft::{DualGridSpec, Grid, GridSpec, Overlap, RealSpectrogram};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"ISSR";
const VERSION: u16 = 1;
const ENTROPY_DEFLATE: u8 = 1;
const MAX_SIGNAL_LEN: u64 = 1 << 40;
const MAX_SOURCES: u16 = 4096;
/// Sentinel for the norm of an all-silent resolution.
pub const NORM_SILENT: i32 = i32::MIN;
/// Largest representable norm, in centi-dB; keeps dequantized energies
/// finite.
const MAX_NORM_CENTI_DB: i32 = 300_000;

/// Convert a norm in dB (possibly −∞ for silence) to wire centi-dB.
pub fn norm_to_centi_db(norm_db: f64) -> i32 {
    if norm_db == f64::NEG_INFINITY {
        NORM_SILENT
    } else {
        (norm_db * 100.0).round() as i32
    }
}

/// Inverse of [`norm_to_centi_db`].
pub fn centi_db_to_db(centi: i32) -> f64 {
    if centi == NORM_SILENT {
        f64::NEG_INFINITY
    } else {
        centi as f64 / 100.0
    }
}

/// Quantized side info for one source: a reference level per resolution, one
/// code matrix per grid block, and one band-activity bitmap per block.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceQuant {
    pub norm_large_centi_db: i32,
    pub norm_small_centi_db: i32,
    pub codes: Vec<Array2<u16>>,
    pub activity: Vec<Array2<bool>>,
}

/// Everything the decoder needs besides the mixture itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfoBundle {
    pub sample_rate: u32,
    pub signal_len: u64,
    pub window_large: u16,
    pub window_small: u16,
    pub overlap: Overlap,
    pub dual: bool,
    pub quant_step_centi_db: i32,
    pub threshold_centi_db: i32,
    pub activity_threshold_micro: u32,
    pub num_bands_large: u16,
    pub num_bands_small: u16,
    pub transient_frames: Vec<u32>,
    pub sources: Vec<SourceQuant>,
}

impl SideInfoBundle {
    pub fn quant_step_db(&self) -> f64 {
        self.quant_step_centi_db as f64 / 100.0
    }

    pub fn threshold_db(&self) -> f64 {
        self.threshold_centi_db as f64 / 100.0
    }

    pub fn activity_threshold(&self) -> f64 {
        self.activity_threshold_micro as f64 / 1e6
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    /// Rebuild the analysis grid the encoder used.
    pub fn grid(&self) -> Result<Grid> {
        let large = GridSpec::new(
            self.window_large as usize,
            self.overlap,
            self.sample_rate,
            self.signal_len as usize,
        )?;
        if self.dual {
            let transients = self.transient_frames.iter().map(|&t| t as usize).collect();
            Ok(Grid::Dual(DualGridSpec::new(
                large,
                self.window_small as usize,
                transients,
            )?))
        } else {
            Ok(Grid::Uniform(large))
        }
    }

    fn bands_for_block(&self, block: usize) -> usize {
        if block == 0 {
            self.num_bands_large as usize
        } else {
            self.num_bands_small as usize
        }
    }

    fn norm_db_for_block(&self, source: usize, block: usize) -> f64 {
        let s = &self.sources[source];
        centi_db_to_db(if block == 0 {
            s.norm_large_centi_db
        } else {
            s.norm_small_centi_db
        })
    }

    /// Band edges per block, recomputed from the header parameters.
    pub fn edges_per_block(&self, grid: &Grid) -> Result<Vec<Vec<usize>>> {
        let large_edges = band_edges(
            self.num_bands_large as usize,
            self.window_large as usize / 2 + 1,
            self.sample_rate,
            self.window_large as usize,
        )?;
        let small_edges = if self.dual {
            band_edges(
                self.num_bands_small as usize,
                self.window_small as usize / 2 + 1,
                self.sample_rate,
                self.window_small as usize,
            )?
        } else {
            Vec::new()
        };
        Ok((0..grid.num_blocks())
            .map(|i| if i == 0 { large_edges.clone() } else { small_edges.clone() })
            .collect())
    }

    /// Dequantize every source into a per-bin magnitude template.
    pub fn magnitudes<T: Scalar>(&self) -> Result<Vec<RealSpectrogram<T>>> {
        let grid = self.grid()?;
        let edges = self.edges_per_block(&grid)?;
        let step = self.quant_step_db();
        (0..self.sources.len())
            .map(|j| {
                let blocks = self.sources[j]
                    .codes
                    .iter()
                    .zip(&edges)
                    .enumerate()
                    .map(|(i, (codes, edges))| {
                        let energies =
                            dequantize_block(codes, self.norm_db_for_block(j, i), step);
                        energies_to_bin_magnitudes(&energies, edges).mapv(T::from_f64_c)
                    })
                    .collect();
                RealSpectrogram::from_blocks(grid.clone(), blocks)
            })
            .collect()
    }

    /// Expand the transmitted band-activity bits into per-bin masks.
    pub fn activity_masks(&self) -> Result<Vec<ActivityMask>> {
        let grid = self.grid()?;
        let edges = self.edges_per_block(&grid)?;
        self.sources
            .iter()
            .map(|s| {
                let blocks = s
                    .activity
                    .iter()
                    .zip(&edges)
                    .map(|(bits, edges)| decode_activity(bits, edges))
                    .collect();
                ActivityMask::from_blocks(grid.clone(), blocks)
            })
            .collect()
    }

    /// Serialize to the wire format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.sources.is_empty() {
            return Err(Error::NoSources);
        }
        if self.sources.len() > MAX_SOURCES as usize {
            return Err(Error::InvalidConfig(format!(
                "{} sources exceed the format limit",
                self.sources.len()
            )));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(ENTROPY_DEFLATE);
        out.push(self.dual as u8);
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.signal_len.to_le_bytes());
        out.extend_from_slice(&(self.sources.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.window_large.to_le_bytes());
        out.extend_from_slice(&self.window_small.to_le_bytes());
        out.push(self.overlap.windows_per_hop() as u8);
        out.push(0);
        out.extend_from_slice(&self.quant_step_centi_db.to_le_bytes());
        out.extend_from_slice(&self.threshold_centi_db.to_le_bytes());
        out.extend_from_slice(&self.activity_threshold_micro.to_le_bytes());
        out.extend_from_slice(&self.num_bands_large.to_le_bytes());
        out.extend_from_slice(&self.num_bands_small.to_le_bytes());
        out.extend_from_slice(&(self.transient_frames.len() as u32).to_le_bytes());
        for &t in &self.transient_frames {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for s in &self.sources {
            out.extend_from_slice(&s.norm_large_centi_db.to_le_bytes());
            out.extend_from_slice(&s.norm_small_centi_db.to_le_bytes());
        }

        let mut raw = Vec::new();
        for s in &self.sources {
            for (codes, activity) in s.codes.iter().zip(&s.activity) {
                for &c in codes.iter() {
                    raw.extend_from_slice(&c.to_le_bytes());
                }
                raw.extend_from_slice(&pack_bits(activity));
            }
        }
        let compressed = entropy_encode(&raw);
        out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
        out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
        out.extend_from_slice(&compressed);

        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parse and validate the wire format.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(DecodeError::BadMagic.into());
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(DecodeError::UnsupportedVersion(version).into());
        }
        let entropy = r.u8()?;
        let dual_flag = r.u8()?;
        let sample_rate = r.u32()?;
        let signal_len = r.u64()?;
        let num_sources = r.u16()?;
        let window_large = r.u16()?;
        let window_small = r.u16()?;
        let windows_per_hop = r.u8()?;
        let _reserved = r.u8()?;
        let quant_step_centi_db = r.i32()?;
        let threshold_centi_db = r.i32()?;
        let activity_threshold_micro = r.u32()?;
        let num_bands_large = r.u16()?;
        let num_bands_small = r.u16()?;
        let num_transients = r.u32()?;
        if num_transients as u64 > MAX_SIGNAL_LEN {
            return Err(corrupt(format!("absurd transient count {num_transients}")));
        }
        let mut transient_frames = Vec::with_capacity(num_transients.min(65_536) as usize);
        for _ in 0..num_transients {
            transient_frames.push(r.u32()?);
        }
        let mut norms = Vec::new();
        for _ in 0..num_sources {
            norms.push((r.i32()?, r.i32()?));
        }
        let raw_len = r.u64()?;
        let payload_len = r.u32()?;
        let payload = r.take(payload_len as usize)?;

        // Structure is intact; verify integrity before trusting any value.
        let body_end = r.pos();
        let stored_crc = r.u32()?;
        if r.remaining() != 0 {
            return Err(corrupt("trailing bytes after checksum".into()));
        }
        if crc32fast::hash(&bytes[..body_end]) != stored_crc {
            return Err(DecodeError::ChecksumMismatch.into());
        }

        if entropy != ENTROPY_DEFLATE {
            return Err(corrupt(format!("unknown entropy backend {entropy}")));
        }
        if dual_flag > 1 {
            return Err(corrupt(format!("bad dual flag {dual_flag}")));
        }
        let overlap = match windows_per_hop {
            2 => Overlap::Half,
            4 => Overlap::ThreeQuarters,
            other => return Err(corrupt(format!("bad overlap code {other}"))),
        };
        if num_sources == 0 {
            return Err(Error::NoSources);
        }
        if num_sources > MAX_SOURCES {
            return Err(corrupt(format!("source count {num_sources} out of range")));
        }
        if signal_len == 0 || signal_len > MAX_SIGNAL_LEN {
            return Err(corrupt(format!("signal length {signal_len} out of range")));
        }
        let dual = dual_flag == 1;
        if !dual && !transient_frames.is_empty() {
            return Err(corrupt("transient list on a single-resolution stream".into()));
        }
        if quant_step_centi_db <= 0 {
            return Err(corrupt(format!("bad quantizer step {quant_step_centi_db}")));
        }
        if threshold_centi_db > -2_000 {
            return Err(corrupt(format!(
                "threshold {threshold_centi_db} above the -20 dB ceiling"
            )));
        }
        if activity_threshold_micro > 1_000_000 {
            return Err(corrupt(format!(
                "bad activity threshold {activity_threshold_micro}"
            )));
        }
        for &(a, b) in &norms {
            for n in [a, b] {
                if n != NORM_SILENT && n > MAX_NORM_CENTI_DB {
                    return Err(corrupt(format!("norm {n} out of range")));
                }
            }
        }
        let step_db = quant_step_centi_db as f64 / 100.0;
        let threshold_db = threshold_centi_db as f64 / 100.0;
        let cap = max_code(step_db, threshold_db)
            .map_err(|_| corrupt("quantizer step/threshold overflow codes".into()))?;

        let bundle = SideInfoBundle {
            sample_rate,
            signal_len,
            window_large,
            window_small,
            overlap,
            dual,
            quant_step_centi_db,
            threshold_centi_db,
            activity_threshold_micro,
            num_bands_large,
            num_bands_small,
            transient_frames,
            sources: norms
                .into_iter()
                .map(|(norm_large_centi_db, norm_small_centi_db)| SourceQuant {
                    norm_large_centi_db,
                    norm_small_centi_db,
                    codes: Vec::new(),
                    activity: Vec::new(),
                })
                .collect(),
        };
        let grid = bundle.grid().map_err(|e| corrupt(format!("bad grid: {e}")))?;
        bundle
            .edges_per_block(&grid)
            .map_err(|e| corrupt(format!("bad bands: {e}")))?;

        let layouts = grid.block_layouts();
        let mut expected_raw = 0usize;
        for (i, l) in layouts.iter().enumerate() {
            let cells = l.num_frames * bundle.bands_for_block(i);
            expected_raw += 2 * cells + cells.div_ceil(8);
        }
        let expected_raw = expected_raw
            .checked_mul(num_sources as usize)
            .ok_or_else(|| corrupt("code count overflow".into()))?;
        if raw_len != expected_raw as u64 {
            return Err(corrupt(format!(
                "payload declares {raw_len} raw bytes, grid implies {expected_raw}"
            )));
        }
        let raw = entropy_decode(payload, expected_raw)?;
        if raw.len() != expected_raw {
            return Err(corrupt(format!(
                "payload decompressed to {} bytes, expected {expected_raw}",
                raw.len()
            )));
        }

        let mut bundle = bundle;
        let mut offset = 0usize;
        for j in 0..bundle.sources.len() {
            for (i, layout) in layouts.iter().enumerate() {
                let bands = bundle.bands_for_block(i);
                let cells = layout.num_frames * bands;
                let mut data = Vec::with_capacity(cells);
                for k in 0..cells {
                    let at = offset + 2 * k;
                    let code = u16::from_le_bytes([raw[at], raw[at + 1]]);
                    if code > cap {
                        return Err(corrupt(format!("code {code} above cap {cap}")));
                    }
                    data.push(code);
                }
                offset += 2 * cells;
                let bits = unpack_bits(&raw[offset..offset + cells.div_ceil(8)], cells);
                offset += cells.div_ceil(8);
                let source = &mut bundle.sources[j];
                source.codes.push(
                    Array2::from_shape_vec((layout.num_frames, bands), data).expect("sized above"),
                );
                source.activity.push(
                    Array2::from_shape_vec((layout.num_frames, bands), bits).expect("sized above"),
                );
            }
        }
        Ok(bundle)
    }
}

fn corrupt(msg: String) -> Error {
    DecodeError::Corrupt(msg).into()
}

/// Row-major, LSB-first bit packing; padding bits are zero.
fn pack_bits(bits: &Array2<bool>) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count)
        .map(|i| bytes[i / 8] & (1 << (i % 8)) != 0)
        .collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn pos(&self) -> usize {
        self.pos
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated {
                needed: n,
                available: self.remaining(),
            }
            .into());
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
