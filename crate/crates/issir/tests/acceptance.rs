//! Acceptance gate: one test per shipping requirement, each printing a
//! single `[PASS]`/`[FAIL]` line with the measured numbers behind it.
//! Thresholds and tolerances are pinned here and nowhere else.

use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex;
use once_cell::sync::Lazy;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use issir::codec::{
    encode, max_code, norm_db, quantize_block, rate_control, wiener_from_side_info, CodecConfig,
    SideInfoBundle, SourceQuant, NORM_SILENT,
};
use issir::error::DecodeError;
use issir::fixtures::{
    five_source_scene, isolated_clicks, note_melody, percussive_scene, two_source_scene, Scene,
};
use issir::metrics::{decompose, evaluate, scores};
use issir::reconstruct::{
    issir_iterate, issir_reconstruct, misi, oracle_wiener, ActivityMask, ReconParams,
};
use issir::stft::{
    griffin_lim, istft, project, snap_magnitudes, stft, Grid, GridSpec, Overlap,
};
use issir::transient::{clean, detect_transients, TransientTrack};
use issir::{DualGridSpec, Error, RealSpectrogram, Signal};

/// Delay span used for every SDR/SIR/SAR evaluation in this suite.
const NUM_DELAYS: usize = 512;

fn check(pass: bool, line: String) {
    println!("[{}] {line}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{line}");
}

fn noise_signal(rate: u32, len: usize, seed: u64) -> Signal<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate)
}

fn music_signal(rate: u32, len: usize) -> Signal<f64> {
    note_melody(rate, len, &[220.0, 330.0, 440.0, 554.4], 0.3, 0.4, 6, 0.8, 0.5, 7)
}

fn uniform_grid(window: usize, overlap: Overlap, rate: u32, len: usize) -> Grid {
    Grid::Uniform(GridSpec::new(window, overlap, rate, len).unwrap())
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn a01_short_time_transform_round_trip_is_exact() {
    let rate = 22_050;
    let len = 2 * rate as usize;
    let fixtures = [noise_signal(rate, len, 3), music_signal(rate, len)];
    let mut worst = 0.0f64;
    let t0 = Instant::now();
    for signal in &fixtures {
        for window in [2_048, 256] {
            for overlap in [Overlap::Half, Overlap::ThreeQuarters] {
                let grid = uniform_grid(window, overlap, rate, len);
                let back = istft(&stft(signal, &grid).unwrap()).unwrap();
                worst = worst.max(relative_l2(&back.samples, &signal.samples));
            }
        }
    }
    let elapsed = t0.elapsed();
    check(
        worst < 1e-10 && elapsed.as_secs_f64() < 1.0,
        format!(
            "analysis/synthesis round trip: worst relative error {worst:.3e} (< 1e-10) \
             across windows {{2048, 256}} x overlaps {{50%, 75%}} in {elapsed:.1?} (< 1 s)"
        ),
    );
}

#[test]
fn a02_consistency_projection_is_idempotent() {
    let rate = 22_050;
    let len = 40_000;
    let large = GridSpec::new(2_048, Overlap::Half, rate, len).unwrap();
    let grids = [
        uniform_grid(2_048, Overlap::Half, rate, len),
        Grid::Dual(DualGridSpec::new(large, 256, vec![6, 18]).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for grid in &grids {
        let blocks = grid
            .block_layouts()
            .iter()
            .map(|l| {
                Array2::from_shape_fn((l.num_frames, l.num_bins()), |_| {
                    Complex::new(rng.gen_range(-1.0f64..1.0), rng.gen_range(-1.0..1.0))
                })
            })
            .collect();
        let x = issir::ComplexSpectrogram::from_blocks(grid.clone(), blocks).unwrap();
        let g1 = project(&x).unwrap();
        let g2 = project(&g1).unwrap();
        let rel = (g2.sub(&g1).unwrap().energy() / g1.energy()).sqrt();
        worst = worst.max(rel);
    }
    check(
        worst < 1e-8,
        format!(
            "projection idempotence on random spectrograms: worst relative drift \
             {worst:.3e} (< 1e-8) on uniform and dual grids"
        ),
    );
}

#[test]
fn a03_phase_retrieval_objective_never_increases() {
    let rate = 22_050;
    let music = music_signal(rate, 3 * rate as usize);
    let grid = uniform_grid(2_048, Overlap::Half, rate, music.len());
    let target = stft(&music, &grid).unwrap().magnitude();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let phase_blocks = grid
        .block_layouts()
        .iter()
        .map(|l| {
            Array2::from_shape_fn((l.num_frames, l.num_bins()), |_| {
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
            })
        })
        .collect();
    let phase = RealSpectrogram::from_blocks(grid.clone(), phase_blocks).unwrap();
    let run = griffin_lim(&target, &phase, 50).unwrap();
    let mut rises = 0usize;
    let mut worst_rise = 0.0f64;
    for pair in run.objectives.windows(2) {
        let rise = pair[1] - pair[0];
        if rise > 1e-9 {
            rises += 1;
            worst_rise = worst_rise.max(rise);
        }
    }
    check(
        run.objectives.len() == 50 && rises == 0,
        format!(
            "phase retrieval objective from randomized phases: {} of {} steps increased \
             (worst rise {worst_rise:.3e}, slack 1e-9)",
            rises,
            run.objectives.len() - 1,
        ),
    );
}

#[test]
fn a04_wiener_estimates_remix_to_the_mixture_exactly() {
    let mut worst = 0.0f64;
    for scene in [two_source_scene(), percussive_scene()] {
        let grid = uniform_grid(2_048, Overlap::Half, scene.sample_rate(), scene.mix.len());
        let estimates = oracle_wiener(&scene.mix, &scene.stems, &grid).unwrap();
        for (t, &m) in scene.mix.samples.iter().enumerate() {
            let sum: f64 = estimates.iter().map(|e| e.samples[t]).sum();
            worst = worst.max((sum - m).abs());
        }
    }
    check(
        worst < 1e-12,
        format!("adaptive-mask estimates sum back to the mixture: max abs error {worst:.3e} (< 1e-12)"),
    );
}

#[test]
fn a05_uniform_unmasked_iteration_with_snapping_matches_misi() {
    let scene = two_source_scene();
    let rate = scene.sample_rate();
    let cut = Signal::new(scene.mix.samples[..2 * rate as usize].to_vec(), rate);
    let stems: Vec<_> = scene
        .stems
        .iter()
        .map(|s| Signal::new(s.samples[..2 * rate as usize].to_vec(), rate))
        .collect();
    let grid = uniform_grid(2_048, Overlap::Half, rate, cut.len());
    let mix_spec = stft(&cut, &grid).unwrap();
    let mags: Vec<_> = stems.iter().map(|s| stft(s, &grid).unwrap().magnitude()).collect();

    let direct = misi(&mix_spec, &mags, 5).unwrap();

    let phase = mix_spec.phase();
    let masks = vec![ActivityMask::all_active(grid.clone()); mags.len()];
    let one_pass = ReconParams::unmasked().with_iterations(1);
    let mut reduced: Vec<_> = mags.iter().map(|m| m.with_phase(&phase).unwrap()).collect();
    for _ in 0..5 {
        reduced = issir_iterate(&mix_spec, reduced, &masks, &one_pass).unwrap();
        reduced = reduced
            .iter()
            .zip(&mags)
            .map(|(e, m)| snap_magnitudes(e, m).unwrap())
            .collect();
    }

    let identical = direct
        .iter()
        .zip(&reduced)
        .all(|(a, b)| a.blocks() == b.blocks());
    check(
        identical,
        "masked iteration with all-active masks, equal error shares and magnitude snapping \
         reproduces direct MISI bit-for-bit over 5 iterations"
            .into(),
    );
}

#[test]
fn a06_exact_spectrogram_misi_beats_oracle_wiener() {
    let scene = two_source_scene();
    let grid = uniform_grid(2_048, Overlap::Half, scene.sample_rate(), scene.mix.len());
    let t0 = Instant::now();
    let mix_spec = stft(&scene.mix, &grid).unwrap();
    let mags: Vec<_> = scene
        .stems
        .iter()
        .map(|s| stft(s, &grid).unwrap().magnitude())
        .collect();
    let est: Vec<_> = misi(&mix_spec, &mags, 50)
        .unwrap()
        .iter()
        .map(|e| istft(e).unwrap())
        .collect();
    let misi_sdr = evaluate(&scene.stems, &est, NUM_DELAYS).unwrap().mean_sdr().unwrap();
    let wiener = oracle_wiener(&scene.mix, &scene.stems, &grid).unwrap();
    let wiener_sdr = evaluate(&scene.stems, &wiener, NUM_DELAYS)
        .unwrap()
        .mean_sdr()
        .unwrap();
    let elapsed = t0.elapsed();
    check(
        misi_sdr > wiener_sdr && elapsed.as_secs_f64() < 60.0,
        format!(
            "exact-spectrogram MISI at 50 iterations: mean SDR {misi_sdr:.2} dB > oracle \
             Wiener {wiener_sdr:.2} dB in {elapsed:.1?} (< 60 s)"
        ),
    );
}

/// Per-bin side info (every band one bin wide) at a 4 dB step, plus the
/// reconstructions and baselines the quantized-quality checks compare.
struct QualityRun {
    m1_sdr: f64,
    m3_sdr: f64,
    wiener_sdr: f64,
}

fn quality_run(scene: &Scene) -> QualityRun {
    let cfg = CodecConfig {
        quant_step_db: 4.0,
        num_bands_large: 1_025,
        num_bands_small: 129,
        ..CodecConfig::default()
    };
    let encoded = encode(&scene.mix, &scene.stems, &cfg).unwrap();
    let m1 = issir_reconstruct(&scene.mix, &encoded.bundle, &ReconParams::fixed_divisor(40.0))
        .unwrap();
    let m3 = issir_reconstruct(&scene.mix, &encoded.bundle, &ReconParams::unmasked()).unwrap();
    let grid = encoded.bundle.grid().unwrap();
    let wiener = oracle_wiener(&scene.mix, &scene.stems, &grid).unwrap();
    QualityRun {
        m1_sdr: evaluate(&scene.stems, &m1, NUM_DELAYS).unwrap().mean_sdr().unwrap(),
        m3_sdr: evaluate(&scene.stems, &m3, NUM_DELAYS).unwrap().mean_sdr().unwrap(),
        wiener_sdr: evaluate(&scene.stems, &wiener, NUM_DELAYS)
            .unwrap()
            .mean_sdr()
            .unwrap(),
    }
}

static FIVE_QUALITY: Lazy<QualityRun> = Lazy::new(|| quality_run(&five_source_scene()));
static TWO_QUALITY: Lazy<QualityRun> = Lazy::new(|| quality_run(&two_source_scene()));

#[test]
fn a07_activity_masking_beats_unmasked_error_distribution() {
    let q = &*FIVE_QUALITY;
    check(
        q.m1_sdr >= q.m3_sdr,
        format!(
            "activity-masked fixed-share mode at a 4 dB step, 50 iterations: mean SDR \
             {:.2} dB >= unmasked mode {:.2} dB on the five-source scene",
            q.m1_sdr, q.m3_sdr
        ),
    );
}

#[test]
fn a08_coarse_quantization_tracks_oracle_wiener_within_half_db() {
    let five = &*FIVE_QUALITY;
    let two = &*TWO_QUALITY;
    check(
        five.m1_sdr >= five.wiener_sdr - 0.5 && two.m1_sdr >= two.wiener_sdr - 0.5,
        format!(
            "masked reconstruction from 4 dB-quantized side info: mean SDR {:.2} dB vs \
             oracle Wiener {:.2} dB (five-source) and {:.2} vs {:.2} dB (two-source), \
             tolerance 0.5 dB",
            five.m1_sdr, five.wiener_sdr, two.m1_sdr, two.wiener_sdr
        ),
    );
}

#[test]
fn a09_quantizer_error_is_bounded_by_half_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    let mut cells = 0usize;
    for u in [1.0, 2.0, 4.0] {
        for _ in 0..50 {
            let frames = rng.gen_range(1..12);
            let bands = rng.gen_range(1..40);
            let pooled = Array2::from_shape_fn((frames, bands), |_| {
                10.0f64.powf(rng.gen_range(-10.0..0.0))
            });
            let norm = norm_db(&[&pooled]);
            let threshold = -80.0;
            let codes = quantize_block(&pooled, norm, u, threshold);
            let back = issir::codec::dequantize_block(&codes, norm, u);
            for (e, d) in pooled.iter().zip(back.iter()) {
                let rel = 10.0 * e.log10() - norm;
                if rel >= threshold {
                    let err = (10.0 * d.log10() - 10.0 * e.log10()).abs();
                    worst = worst.max(err - u / 2.0);
                    cells += 1;
                }
            }
        }
    }
    check(
        worst <= 1e-9,
        format!(
            "log quantizer round trip on {cells} above-threshold cells, steps {{1, 2, 4}} dB: \
             worst excess over half a step {worst:.3e} dB"
        ),
    );
}

/// Build a structurally valid random bundle: real grid, in-range codes,
/// matching activity dimensions.
fn random_bundle(seed: u64) -> SideInfoBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window_large = *[64usize, 128, 256].choose(&mut rng).unwrap();
    let window_small = window_large / 4;
    let overlap = if rng.gen_bool(0.5) { Overlap::Half } else { Overlap::ThreeQuarters };
    let sample_rate = *[8_000u32, 22_050].choose(&mut rng).unwrap();
    let signal_len = rng.gen_range(600..3_000usize);
    let large = GridSpec::new(window_large, overlap, sample_rate, signal_len).unwrap();
    let spacing = 2 * window_large / large.hop;
    let dual = rng.gen_bool(0.5) && large.num_frames > 3 * spacing + 2;
    let transient_frames: Vec<usize> = if dual {
        let first = rng.gen_range(0..spacing);
        let second = first + spacing + rng.gen_range(0..spacing);
        vec![first, second].into_iter().filter(|&f| f < large.num_frames).collect()
    } else {
        Vec::new()
    };
    let grid = if dual {
        Grid::Dual(DualGridSpec::new(large, window_small, transient_frames.clone()).unwrap())
    } else {
        Grid::Uniform(large)
    };

    let bins_large = window_large / 2 + 1;
    let bins_small = window_small / 2 + 1;
    let num_bands_large = rng.gen_range(1..=bins_large);
    let num_bands_small = rng.gen_range(1..=bins_small);
    let quant_step_centi_db = *[25i32, 100, 400].choose(&mut rng).unwrap();
    let threshold_centi_db = *[-8_000i32, -6_000, -2_500].choose(&mut rng).unwrap();
    let top = max_code(
        quant_step_centi_db as f64 / 100.0,
        threshold_centi_db as f64 / 100.0,
    )
    .unwrap();

    let layouts = grid.block_layouts();
    let sources = (0..rng.gen_range(1..=5usize))
        .map(|_| {
            let silent = rng.gen_bool(0.1);
            SourceQuant {
                norm_large_centi_db: if silent {
                    NORM_SILENT
                } else {
                    rng.gen_range(-200_000..=10_000)
                },
                norm_small_centi_db: if silent {
                    NORM_SILENT
                } else {
                    rng.gen_range(-200_000..=10_000)
                },
                codes: layouts
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let bands = if i == 0 { num_bands_large } else { num_bands_small };
                        Array2::from_shape_fn((l.num_frames, bands), |_| rng.gen_range(0..=top))
                    })
                    .collect(),
                activity: layouts
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let bands = if i == 0 { num_bands_large } else { num_bands_small };
                        Array2::from_shape_fn((l.num_frames, bands), |_| rng.gen_bool(0.5))
                    })
                    .collect(),
            }
        })
        .collect();

    SideInfoBundle {
        sample_rate,
        signal_len: signal_len as u64,
        window_large: window_large as u16,
        window_small: window_small as u16,
        overlap,
        dual,
        quant_step_centi_db,
        threshold_centi_db,
        activity_threshold_micro: rng.gen_range(1..1_000_000),
        num_bands_large: num_bands_large as u16,
        num_bands_small: num_bands_small as u16,
        transient_frames: transient_frames.iter().map(|&f| f as u32).collect(),
        sources,
    }
}

#[test]
fn a10_bitstream_round_trips_and_rejects_corruption() {
    for seed in 0..1_000u64 {
        let bundle = random_bundle(seed);
        let bytes = bundle.to_bytes().unwrap();
        let back = SideInfoBundle::from_bytes(&bytes).unwrap();
        assert_eq!(bundle, back, "round trip diverged at seed {seed}");
    }

    let bytes = random_bundle(4_242).to_bytes().unwrap();
    for n in 0..bytes.len() {
        match SideInfoBundle::from_bytes(&bytes[..n]) {
            Err(Error::Decode(DecodeError::Truncated { .. })) => {}
            other => panic!("truncation to {n} bytes gave {other:?}"),
        }
    }
    let mut magic = bytes.clone();
    magic[0] ^= 0xff;
    assert!(matches!(
        SideInfoBundle::from_bytes(&magic),
        Err(Error::Decode(DecodeError::BadMagic))
    ));
    let mut version = bytes.clone();
    version[4] = 0xfe;
    assert!(matches!(
        SideInfoBundle::from_bytes(&version),
        Err(Error::Decode(DecodeError::UnsupportedVersion(_)))
    ));
    let mut flips = 0usize;
    for at in 6..bytes.len() {
        let mut corrupt = bytes.clone();
        corrupt[at] ^= 0x40;
        match SideInfoBundle::from_bytes(&corrupt) {
            Err(Error::Decode(_)) => flips += 1,
            other => panic!("flipped byte {at} gave {other:?}"),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let garbage: Vec<u8> = (0..rng.gen_range(0..400)).map(|_| rng.gen()).collect();
        assert!(SideInfoBundle::from_bytes(&garbage).is_err());
    }
    check(
        true,
        format!(
            "side-info stream: 1000 random bundles round-tripped bit-exactly; every \
             truncation, magic/version edit and {flips} byte flips rejected with decode errors"
        ),
    );
}

#[test]
fn a11_rate_control_lands_in_window_and_grows_with_target() {
    let scene = five_source_scene();
    let cfg = CodecConfig::default();
    let mut achieved = Vec::new();
    for target in [2.0, 10.0, 32.0] {
        let rc = rate_control(&scene.mix, &scene.stems, &cfg, target).unwrap();
        achieved.push((target, rc.achieved_rate));
    }
    let in_window = achieved
        .iter()
        .all(|&(t, r)| r >= 0.8 * t && r <= 1.2 * t);
    let monotone = achieved.windows(2).all(|w| w[0].1 <= w[1].1);
    check(
        in_window && monotone,
        format!(
            "rate control on the five-source scene: targets {{2, 10, 32}} kb/source/s \
             achieved {:.3} / {:.3} / {:.3} (each within [0.8, 1.2] x target, monotone)",
            achieved[0].1, achieved[1].1, achieved[2].1
        ),
    );
}

#[test]
fn a12_click_train_transients_are_found_once_each_with_spacing() {
    let window = 2_048usize;
    let (signal, clicks) = isolated_clicks(10, window);
    let grid = GridSpec::new(window, Overlap::Half, signal.sample_rate, signal.len()).unwrap();
    let cleaned = clean(&detect_transients(&signal, &grid).unwrap(), &grid);
    let frames = cleaned.frames();
    let min_gap = 2 * window / grid.hop;

    let count_ok = frames.len() == clicks.len();
    let mut placement_ok = count_ok;
    if count_ok {
        for (&frame, &click) in frames.iter().zip(&clicks) {
            let entering = (grid.pad() + click + 1).saturating_sub(window).div_ceil(grid.hop);
            if frame.abs_diff(entering) > 1 {
                placement_ok = false;
            }
        }
    }
    let spacing_ok = frames.windows(2).all(|w| w[1] - w[0] >= min_gap);

    // The spacing invariant must hold for arbitrary raw tracks, not just
    // well-separated clicks.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dense_ok = (0..20).all(|_| {
        let flags: Vec<bool> = (0..grid.num_frames).map(|_| rng.gen_bool(0.3)).collect();
        let track = TransientTrack { flags, source: None };
        clean(&track, &grid)
            .frames()
            .windows(2)
            .all(|w| w[1] - w[0] >= min_gap)
    });

    check(
        count_ok && placement_ok && spacing_ok && dense_ok,
        format!(
            "10-click train: {} cleaned transients (want 10), each within 1 frame of its \
             click, spacing >= {min_gap} frames holds there and on 20 dense random tracks",
            frames.len()
        ),
    );
}

#[test]
fn a13_separation_metrics_match_closed_forms() {
    let rate = 8_000;
    let seg = 80usize;
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut segment = |lo: usize| {
        let mut v = vec![0.0f64; 3 * seg];
        for x in v[lo..lo + seg].iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        v
    };
    let r1 = segment(0);
    let r2 = segment(seg);
    let n = segment(2 * seg);
    let (a, b) = (0.9f64, 0.3f64);
    let est: Vec<f64> = (0..3 * seg).map(|t| a * r1[t] + b * r2[t] + n[t]).collect();
    let refs = [Signal::new(r1.clone(), rate), Signal::new(r2.clone(), rate)];
    let d = decompose(&Signal::new(est.clone(), rate), &refs, 0, 1).unwrap();
    let got = scores(&d);

    let e = |v: &[f64]| -> f64 { v.iter().map(|x| x * x).sum() };
    let (e1, e2, en) = (e(&r1), e(&r2), e(&n));
    let sdr = 10.0 * (a * a * e1 / (b * b * e2 + en)).log10();
    let sir = 10.0 * (a * a * e1 / (b * b * e2)).log10();
    let sar = 10.0 * ((a * a * e1 + b * b * e2) / en).log10();
    let err = (got.sdr_db.unwrap() - sdr)
        .abs()
        .max((got.sir_db.unwrap() - sir).abs())
        .max((got.sar_db.unwrap() - sar).abs());

    // Decomposition identity and orthogonality on random overlapping inputs.
    let mut identity = 0.0f64;
    let mut ortho = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let len = 400;
        let refs: Vec<Signal<f64>> = (0..3)
            .map(|_| Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate))
            .collect();
        let est = Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate);
        let d = decompose(&est, &refs, 1, 16).unwrap();
        let scale = est.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        for t in 0..d.s_target.len() {
            let sum = d.s_target[t] + d.e_interf[t] + d.e_artif[t];
            let x = if t < len { est.samples[t] } else { 0.0 };
            identity = identity.max((sum - x).abs() / scale);
        }
        let dot: f64 = d
            .s_target
            .iter()
            .zip(&d.e_interf)
            .zip(&d.e_artif)
            .map(|((&s, &i), &a)| (s + i) * a)
            .sum();
        let na = e(&d.e_artif).sqrt();
        let nsi: f64 = d
            .s_target
            .iter()
            .zip(&d.e_interf)
            .map(|(&s, &i)| (s + i) * (s + i))
            .sum::<f64>()
            .sqrt();
        if na > 0.0 && nsi > 0.0 {
            ortho = ortho.max(dot.abs() / (na * nsi));
        }
    }

    check(
        err < 1e-9 && identity < 1e-9 && ortho < 1e-6,
        format!(
            "single-delay decomposition matches closed forms within {err:.3e} dB (< 1e-9); \
             identity residual {identity:.3e}, projection orthogonality {ortho:.3e}"
        ),
    );
}

#[test]
fn a14_end_to_end_decode_beats_decoder_side_wiener() {
    let scene = five_source_scene();
    let t0 = Instant::now();
    let rc = rate_control(&scene.mix, &scene.stems, &CodecConfig::default(), 10.0).unwrap();
    let decoded = issir_reconstruct(
        &scene.mix,
        &rc.encoded.bundle,
        &ReconParams::fixed_divisor(40.0),
    )
    .unwrap();
    let pipeline = t0.elapsed();
    let side = wiener_from_side_info(&scene.mix, &rc.encoded.bundle).unwrap();
    let issir_sdr = evaluate(&scene.stems, &decoded, NUM_DELAYS)
        .unwrap()
        .mean_sdr()
        .unwrap();
    let side_sdr = evaluate(&scene.stems, &side, NUM_DELAYS).unwrap().mean_sdr().unwrap();
    check(
        issir_sdr > side_sdr && pipeline.as_secs_f64() < 300.0,
        format!(
            "encode at {:.2} kb/source/s + 50-iteration decode in {pipeline:.1?} (< 5 min): \
             mean SDR {issir_sdr:.2} dB > side-info Wiener {side_sdr:.2} dB",
            rc.achieved_rate
        ),
    );
}

#[test]
fn a15_dual_resolution_matches_or_beats_single_at_high_rate() {
    let scene = percussive_scene();
    let mut results = Vec::new();
    for dual in [false, true] {
        let cfg = CodecConfig { dual, ..CodecConfig::default() };
        let rc = rate_control(&scene.mix, &scene.stems, &cfg, 32.0).unwrap();
        let est = issir_reconstruct(
            &scene.mix,
            &rc.encoded.bundle,
            &ReconParams::fixed_divisor(40.0),
        )
        .unwrap();
        let sdr = evaluate(&scene.stems, &est, NUM_DELAYS).unwrap().mean_sdr().unwrap();
        results.push((rc.achieved_rate, sdr));
    }
    let (single_rate, single_sdr) = results[0];
    let (dual_rate, dual_sdr) = results[1];
    check(
        single_rate >= 32.0 && dual_rate >= 32.0 && dual_sdr >= single_sdr,
        format!(
            "transient-rich scene at >= 32 kb/source/s ({single_rate:.2} single, \
             {dual_rate:.2} dual): dual-grid mean SDR {dual_sdr:.2} dB >= single-grid \
             {single_sdr:.2} dB"
        ),
    );
}
