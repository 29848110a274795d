//! Auditory-motivated frequency bands for side-info compaction.
//!
//! Bin edges are placed at equal steps of the ERB-rate scale
//! `21.4 * log10(1 + 0.00437 f)`, clamped so every band keeps at least one
//! bin, then repaired so band widths never decrease with frequency. The
//! decoder recomputes the same edges from the header parameters, so edges
//! are never transmitted.

use crate::error::{Error, Result};

/// ERB-rate (in ERBs) of a frequency in Hz.
pub fn erb_rate(freq_hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * freq_hz).log10()
}

fn inverse_erb_rate(erbs: f64) -> f64 {
    (10.0f64.powf(erbs / 21.4) - 1.0) / 0.00437
}

/// Partition `num_bins` spectrum bins into `num_bands` contiguous bands of
/// equal ERB-rate extent. Returns `num_bands + 1` edges with `edges[0] = 0`
/// and `edges[num_bands] = num_bins`; band `i` covers
/// `edges[i]..edges[i + 1]`. Widths are at least one bin and non-decreasing.
pub fn band_edges(
    num_bands: usize,
    num_bins: usize,
    sample_rate: u32,
    window_len: usize,
) -> Result<Vec<usize>> {
    if num_bands == 0 || num_bands > num_bins {
        return Err(Error::InvalidConfig(format!(
            "{num_bands} bands cannot partition {num_bins} bins"
        )));
    }
    let total_erbs = erb_rate(sample_rate as f64 / 2.0);
    let mut edges = vec![0usize; num_bands + 1];
    edges[num_bands] = num_bins;
    for i in 1..num_bands {
        let freq = inverse_erb_rate(i as f64 * total_erbs / num_bands as f64);
        let raw = (freq * window_len as f64 / sample_rate as f64).round() as usize;
        let lo = edges[i - 1] + 1;
        let hi = num_bins - (num_bands - i);
        edges[i] = raw.clamp(lo, hi);
    }

    // Clamping near the ends can leave a band narrower than its left
    // neighbour; shift edges down until widths are non-decreasing. Each move
    // shrinks the sum of edges, so this terminates, and a violation implies
    // the left band has at least two bins, so no band ever empties.
    let mut i = 1;
    while i < num_bands {
        if edges[i + 1] - edges[i] < edges[i] - edges[i - 1] {
            edges[i] -= 1;
            i = i.max(2) - 1;
        } else {
            i += 1;
        }
    }
    Ok(edges)
}

/// Band index of every bin, from a set of edges.
pub fn band_of_bin(edges: &[usize]) -> Vec<usize> {
    let mut map = Vec::with_capacity(*edges.last().unwrap_or(&0));
    for (band, pair) in edges.windows(2).enumerate() {
        map.extend(std::iter::repeat_n(band, pair[1] - pair[0]));
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Frozen reference for a 256-sample window at 44.1 kHz (129 bins) split
    /// into 25 bands, computed independently from the edge-placement rule.
    #[test]
    fn golden_edges_25_bands_129_bins() {
        let edges = band_edges(25, 129, 44_100, 256).unwrap();
        assert_eq!(
            edges,
            vec![
                0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 16, 19, 24, 29, 35, 42, 50, 61,
                73, 88, 106, 129
            ]
        );
    }

    #[test]
    fn one_band_per_bin_is_identity() {
        let edges = band_edges(129, 129, 44_100, 256).unwrap();
        assert_eq!(edges, (0..=129).collect::<Vec<_>>());
    }

    #[test]
    fn more_bands_than_bins_is_rejected() {
        assert!(band_edges(130, 129, 44_100, 256).is_err());
    }

    #[test]
    fn bin_to_band_map_covers_all_bins() {
        let edges = band_edges(25, 129, 44_100, 256).unwrap();
        let map = band_of_bin(&edges);
        assert_eq!(map.len(), 129);
        assert_eq!(map[0], 0);
        assert_eq!(map[128], 24);
        for (bin, &band) in map.iter().enumerate() {
            assert!(edges[band] <= bin && bin < edges[band + 1]);
        }
    }

    proptest! {
        /// Any feasible request yields an exact partition with widths that
        /// are positive and non-decreasing.
        #[test]
        fn edges_partition_with_monotone_widths(
            window_exp in 3usize..12,
            bands in 1usize..300,
            rate in prop::sample::select(vec![8_000u32, 16_000, 22_050, 44_100, 48_000]),
        ) {
            let window = 1usize << window_exp;
            let bins = window / 2 + 1;
            prop_assume!(bands <= bins);
            let edges = band_edges(bands, bins, rate, window).unwrap();
            prop_assert_eq!(edges[0], 0);
            prop_assert_eq!(edges[bands], bins);
            let widths: Vec<usize> =
                edges.windows(2).map(|p| p[1] - p[0]).collect();
            prop_assert!(widths.iter().all(|&w| w >= 1));
            prop_assert!(widths.windows(2).all(|p| p[1] >= p[0]));
        }
    }
}
