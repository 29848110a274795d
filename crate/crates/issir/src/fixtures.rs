//! Deterministic audio scenes for tests and the demo tooling.
//!
//! Everything here is seeded: the same call always returns the same samples,
//! so encoded byte streams and separation scores are reproducible. The
//! canonical scenes are shaped for the evaluation suite — musical enough to
//! have real dynamics (notes, decays, silence between hits) while staying
//! cheap to synthesize.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::signal::Signal;
use crate::Sample;

/// A mixture and the stems it was mixed from.
#[derive(Debug, Clone)]
pub struct Scene {
    pub stems: Vec<Signal<Sample>>,
    pub mix: Signal<Sample>,
    pub labels: Vec<&'static str>,
}

impl Scene {
    fn new(stems: Vec<Signal<Sample>>, labels: Vec<&'static str>) -> Self {
        let mix = Signal::mix(&stems);
        Self { stems, mix, labels }
    }

    pub fn sample_rate(&self) -> u32 {
        self.mix.sample_rate
    }

    pub fn num_sources(&self) -> usize {
        self.stems.len()
    }
}

/// Pure sinusoid.
pub fn sine(sample_rate: u32, len: usize, freq_hz: f64, amp: f64, phase: f64) -> Signal<Sample> {
    let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
    Signal::new(
        (0..len).map(|t| amp * (w * t as f64 + phase).sin()).collect(),
        sample_rate,
    )
}

/// Harmonic stack: partial k gets amplitude `amp / k^rolloff`.
pub fn harmonic(
    sample_rate: u32,
    len: usize,
    f0_hz: f64,
    partials: usize,
    rolloff: f64,
    amp: f64,
) -> Signal<Sample> {
    let nyquist = sample_rate as f64 / 2.0;
    let mut samples = vec![0.0; len];
    for k in 1..=partials {
        let f = f0_hz * k as f64;
        if f >= nyquist {
            break;
        }
        let w = 2.0 * std::f64::consts::PI * f / sample_rate as f64;
        let a = amp / (k as f64).powf(rolloff);
        for (t, s) in samples.iter_mut().enumerate() {
            *s += a * (w * t as f64 + 0.37 * k as f64).sin();
        }
    }
    Signal::new(samples, sample_rate)
}

/// White noise band-limited to `[lo_hz, hi_hz]` by zeroing spectrum bins,
/// scaled to the requested RMS.
pub fn band_noise(
    sample_rate: u32,
    len: usize,
    lo_hz: f64,
    hi_hz: f64,
    rms: f64,
    seed: u64,
) -> Signal<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut spectrum);
    for (k, v) in spectrum.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * sample_rate as f64 / len as f64;
        if f < lo_hz || f > hi_hz {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut spectrum);
    let mut out = Signal::new(spectrum.iter().map(|v| v.re).collect(), sample_rate);
    let current = out.rms();
    if current > 0.0 {
        out = out.scaled(rms / current);
    }
    out
}

/// Multiply by a raised sinusoidal envelope: depth 0 leaves the signal
/// untouched, depth 1 reaches silence in the troughs.
pub fn amplitude_modulate(signal: &Signal<Sample>, rate_hz: f64, depth: f64) -> Signal<Sample> {
    let w = 2.0 * std::f64::consts::PI * rate_hz / signal.sample_rate as f64;
    Signal::new(
        signal
            .samples
            .iter()
            .enumerate()
            .map(|(t, &s)| s * (1.0 - depth * 0.5 * (1.0 + (w * t as f64).sin())))
            .collect(),
        signal.sample_rate,
    )
}

/// Single-sample impulses of alternating sign at the given positions.
pub fn click_train(sample_rate: u32, len: usize, positions: &[usize], amp: f64) -> Signal<Sample> {
    let mut samples = vec![0.0; len];
    for (i, &p) in positions.iter().enumerate() {
        if p < len {
            samples[p] = if i % 2 == 0 { amp } else { -amp };
        }
    }
    Signal::new(samples, sample_rate)
}

/// Percussive hits: at each position, a noise burst band-limited to
/// `band_hz = (lo, hi)` with an instant attack and exponential decay.
pub fn percussive_hits(
    sample_rate: u32,
    len: usize,
    positions: &[usize],
    decay_secs: f64,
    band_hz: (f64, f64),
    amp: f64,
    seed: u64,
) -> Signal<Sample> {
    let bed = band_noise(sample_rate, len, band_hz.0, band_hz.1, 1.0, seed);
    let tau = decay_secs * sample_rate as f64;
    let mut env = vec![0.0f64; len];
    for &p in positions {
        for (t, e) in env.iter_mut().enumerate().skip(p) {
            let d = (-((t - p) as f64) / tau).exp();
            if d < 1e-4 {
                break;
            }
            *e = e.max(d);
        }
    }
    Signal::new(
        bed.samples
            .iter()
            .zip(&env)
            .map(|(s, e)| amp * s * e)
            .collect(),
        sample_rate,
    )
}

/// A melody of harmonic notes: fundamentals cycle through `scale_hz`, one
/// note per `note_secs`, each with a fast attack and exponential decay (so
/// the stem has genuine silence before the next onset when the decay is
/// short).
#[allow(clippy::too_many_arguments)]
pub fn note_melody(
    sample_rate: u32,
    len: usize,
    scale_hz: &[f64],
    note_secs: f64,
    decay_secs: f64,
    partials: usize,
    rolloff: f64,
    amp: f64,
    seed: u64,
) -> Signal<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let note_len = (note_secs * sample_rate as f64).round() as usize;
    let tau = decay_secs * sample_rate as f64;
    let attack = (0.005 * sample_rate as f64).round() as usize;
    let mut samples = vec![0.0; len];
    let mut start = 0;
    while start < len {
        let f0 = scale_hz[rng.gen_range(0..scale_hz.len())];
        let note = harmonic(sample_rate, note_len.min(len - start), f0, partials, rolloff, amp);
        for (t, &s) in note.samples.iter().enumerate() {
            let env = if t < attack {
                t as f64 / attack as f64
            } else {
                (-((t - attack) as f64) / tau).exp()
            };
            samples[start + t] += s * env;
        }
        start += note_len;
    }
    Signal::new(samples, sample_rate)
}

/// Add a broadband noise bed `db_below` decibels under the signal's RMS.
/// Beds keep deep-threshold encodings busy (every band carries a distinct
/// low-level value) while vanishing entirely once the coder's silence
/// threshold rises above them.
pub fn with_noise_bed(signal: &Signal<Sample>, db_below: f64, seed: u64) -> Signal<Sample> {
    let level = signal.rms() * 10f64.powf(-db_below / 20.0);
    let bed = band_noise(
        signal.sample_rate,
        signal.len(),
        40.0,
        0.45 * signal.sample_rate as f64,
        level,
        seed,
    );
    Signal::mix(&[signal.clone(), bed])
}

/// Evenly spaced positions with a deterministic jitter, all kept at least
/// `min_gap` apart and inside `[margin, len - margin)`.
fn jittered_positions(
    len: usize,
    count: usize,
    min_gap: usize,
    margin: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = len - 2 * margin;
    let stride = span / count;
    let jitter = stride.saturating_sub(min_gap) / 2;
    let mut out = Vec::with_capacity(count);
    let mut last = 0usize;
    for i in 0..count {
        let base = margin + i * stride + stride / 2;
        let j = if jitter > 0 {
            rng.gen_range(0..=2 * jitter) as isize - jitter as isize
        } else {
            0
        };
        let mut p = (base as isize + j).max(0) as usize;
        if i > 0 && p < last + min_gap {
            p = last + min_gap;
        }
        out.push(p);
        last = p;
    }
    out
}

const FIXTURE_RATE: u32 = 22_050;

/// Two heavily overlapping broadband sources, 5 seconds. Spectral overlap is
/// deliberate: masking alone leaves audible interference here, which is what
/// phase-aware reconstruction needs to show an advantage over.
pub fn two_source_scene() -> Scene {
    let rate = FIXTURE_RATE;
    let len = 5 * rate as usize;
    let melody = note_melody(
        rate,
        len,
        &[220.0, 277.2, 329.6, 440.0, 554.4],
        0.4,
        0.5,
        10,
        0.7,
        0.45,
        11,
    );
    let texture = amplitude_modulate(&band_noise(rate, len, 150.0, 7_000.0, 0.12, 12), 0.7, 0.6);
    Scene::new(vec![melody, texture], vec!["melody", "texture"])
}

/// Five musical stems, 15 seconds: bass, lead and arpeggio melodies on the
/// same pentatonic scale octaves apart, plus a two-note chord pad and
/// percussive hits. The voices are harmonically rich, so their partials
/// interleave densely across the low and mid bands — adaptive masking alone
/// cannot undo that, which is where iterative reconstruction earns its keep.
/// Note decays and modulation troughs give every stem genuine quiet
/// stretches, and a faint broadband bed under each stem keeps the coded rate
/// spanning a wide range as the silence threshold moves.
pub fn five_source_scene() -> Scene {
    let rate = FIXTURE_RATE;
    let len = 15 * rate as usize;
    let bass = note_melody(
        rate,
        len,
        &[55.0, 61.7, 73.4, 82.4, 98.0],
        0.75,
        0.35,
        14,
        0.7,
        0.40,
        21,
    );
    let lead = note_melody(
        rate,
        len,
        &[220.0, 246.9, 293.7, 329.6, 392.0],
        0.375,
        0.30,
        12,
        0.6,
        0.30,
        22,
    );
    let chord = Signal::mix(&[
        harmonic(rate, len, 164.8, 14, 0.8, 0.13),
        harmonic(rate, len, 246.9, 12, 0.8, 0.10),
    ]);
    let pad = amplitude_modulate(&chord, 0.22, 0.9);
    let hits = jittered_positions(len, 29, (0.30 * rate as f64) as usize, rate as usize / 4, 23);
    let drums = percussive_hits(rate, len, &hits, 0.035, (800.0, 9_000.0), 0.55, 24);
    let arp = note_melody(
        rate,
        len,
        &[440.0, 523.25, 587.33, 659.26, 784.0],
        0.25,
        0.30,
        8,
        0.6,
        0.28,
        25,
    );
    let stems = [bass, lead, pad, drums, arp]
        .iter()
        .enumerate()
        .map(|(i, s)| with_noise_bed(s, 45.0, 26 + i as u64))
        .collect();
    Scene::new(stems, vec!["bass", "lead", "pad", "drums", "arp"])
}

/// Transient-heavy material, 10 seconds: a bare click train and a run of
/// sharp percussive hits against sustained tonal stems. Clicks are the
/// hardest case for a long analysis window — their time localization lives
/// entirely in the phase — so this is where a transient-aware grid has
/// something to win.
pub fn percussive_scene() -> Scene {
    let rate = FIXTURE_RATE;
    let len = 10 * rate as usize;
    let min_gap = 2 * 2_048 + 512;
    let clicks = click_train(
        rate,
        len,
        &jittered_positions(len, 14, min_gap, rate as usize / 4, 31),
        0.9,
    );
    let hits = jittered_positions(len, 12, min_gap, rate as usize / 3, 34);
    let drums = percussive_hits(rate, len, &hits, 0.020, (500.0, 10_000.0), 0.9, 32);
    let chord = amplitude_modulate(&harmonic(rate, len, 196.0, 12, 0.8, 0.22), 0.15, 0.5);
    let arp = note_melody(
        rate,
        len,
        &[392.0, 466.2, 523.25, 587.33, 698.46],
        0.3,
        0.35,
        9,
        0.7,
        0.26,
        35,
    );
    let stems: Vec<_> = [clicks, drums, chord, arp]
        .iter()
        .enumerate()
        .map(|(i, s)| with_noise_bed(s, 42.0, 36 + i as u64))
        .collect();
    Scene::new(stems, vec!["clicks", "drums", "chord", "arp"])
}

/// A bare train of `count` clicks with irregular spacing, plus the sample
/// positions the clicks were placed at. Spacings all clear two large
/// analysis windows so no click should be merged away.
pub fn isolated_clicks(count: usize, window_len: usize) -> (Signal<Sample>, Vec<usize>) {
    let rate = FIXTURE_RATE;
    let min_gap = 2 * window_len + window_len / 2;
    let len = (count + 1) * (min_gap + window_len) + rate as usize;
    let positions = jittered_positions(len, count, min_gap, window_len, 41);
    (click_train(rate, len, &positions, 0.9), positions)
}
