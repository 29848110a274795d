//! Grid-sweep the codec and reconstruction parameters over one scene.
//!
//! The sweep reads a plain-text config of `key = value` lines where each
//! value may be a comma list; every combination (in fixed key order) becomes
//! one condition. Each condition encodes at its rate target, reconstructs,
//! and is scored against the stems next to an oracle Wiener baseline that
//! shares the condition's analysis overlap.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use issir::codec::{rate_control, CodecConfig};
use issir::metrics::{evaluate, SeparationScores};
use issir::reconstruct::{issir_reconstruct, oracle_wiener, ErrorDivisor, ReconParams};
use issir::signal::Signal;
use issir::stft::{Grid, GridSpec, Overlap};
use rayon::prelude::*;

use crate::decode::parse_divisor;
use crate::wav::read_all_same_rate;

/// Sources are scored against reference filters up to this many samples of
/// delay, matching the library's evaluation default.
const NUM_DELAYS: usize = 512;
const WINDOW_LARGE: usize = 2_048;
const WINDOW_SMALL: usize = 256;

#[derive(clap::Args)]
pub struct Args {
    /// Stem WAVs; the mixture is their sum
    #[arg(long, num_args = 1.., required = true)]
    stems: Vec<PathBuf>,
    /// Sweep config file of `key = value` lines
    #[arg(long)]
    config: PathBuf,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

/// One point of the sweep grid, kept alongside the exact text it was parsed
/// from so report rows echo the config faithfully.
struct Condition {
    target_rate: f64,
    step_db: f64,
    rho: f64,
    divisor: ErrorDivisor,
    divisor_label: String,
    overlap: Overlap,
    overlap_label: String,
    bands: usize,
    dual: bool,
    iterations: usize,
}

impl Condition {
    fn prefix(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.target_rate,
            self.step_db,
            self.rho,
            self.divisor_label,
            self.overlap_label,
            self.bands,
            self.dual,
            self.iterations
        )
    }

    fn describe(&self) -> String {
        format!(
            "target_rate={} step_db={} rho={} divisor={} overlap={} bands={} dual={} \
             iterations={}",
            self.target_rate,
            self.step_db,
            self.rho,
            self.divisor_label,
            self.overlap_label,
            self.bands,
            self.dual,
            self.iterations
        )
    }
}

/// Raw config: each key maps to the list of values it sweeps over.
struct SweepConfig {
    target_rate: Vec<f64>,
    step_db: Vec<f64>,
    rho: Vec<f64>,
    divisor: Vec<String>,
    overlap: Vec<String>,
    bands: Vec<usize>,
    dual: Vec<bool>,
    iterations: Vec<usize>,
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .map(|item| {
            item.parse::<T>()
                .map_err(|_| anyhow::anyhow!("bad `{key}` entry `{item}`"))
        })
        .collect()
}

fn parse_config(text: &str) -> Result<SweepConfig> {
    let mut pairs = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
        if pairs.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
            bail!("line {}: key `{}` given twice", lineno + 1, key.trim());
        }
    }
    let mut take = |key: &str| pairs.remove(key);

    let target_rate = parse_list(
        "target_rate",
        &take("target_rate").context("config must set `target_rate`")?,
    )?;
    let step_db = take("step_db").map_or(Ok(vec![1.0]), |v| parse_list("step_db", &v))?;
    let rho = take("rho").map_or(Ok(vec![0.01]), |v| parse_list("rho", &v))?;
    let divisor = take("divisor").map_or(Ok(vec!["40".to_string()]), |v| {
        parse_list("divisor", &v)
    })?;
    let overlap = take("overlap").map_or(Ok(vec!["half".to_string()]), |v| {
        parse_list("overlap", &v)
    })?;
    let bands = take("bands").map_or(Ok(vec![250]), |v| parse_list("bands", &v))?;
    let dual = take("dual").map_or(Ok(vec![false]), |v| parse_list("dual", &v))?;
    let iterations =
        take("iterations").map_or(Ok(vec![50]), |v| parse_list("iterations", &v))?;

    if let Some(key) = pairs.into_keys().next() {
        bail!("unknown config key `{key}`");
    }
    Ok(SweepConfig {
        target_rate,
        step_db,
        rho,
        divisor,
        overlap,
        bands,
        dual,
        iterations,
    })
}

fn parse_overlap(label: &str) -> Result<Overlap> {
    match label {
        "half" => Ok(Overlap::Half),
        "three-quarters" => Ok(Overlap::ThreeQuarters),
        other => bail!("overlap must be `half` or `three-quarters`, got `{other}`"),
    }
}

/// Expand the per-key lists into the full grid, iterating the last key
/// fastest so rows group by rate first.
fn conditions(cfg: &SweepConfig) -> Result<Vec<Condition>> {
    let mut grid = Vec::new();
    for &target_rate in &cfg.target_rate {
        for &step_db in &cfg.step_db {
            for &rho in &cfg.rho {
                for divisor_label in &cfg.divisor {
                    for overlap_label in &cfg.overlap {
                        for &bands in &cfg.bands {
                            for &dual in &cfg.dual {
                                for &iterations in &cfg.iterations {
                                    grid.push(Condition {
                                        target_rate,
                                        step_db,
                                        rho,
                                        divisor: parse_divisor(divisor_label)?,
                                        divisor_label: divisor_label.clone(),
                                        overlap: parse_overlap(overlap_label)?,
                                        overlap_label: overlap_label.clone(),
                                        bands,
                                        dual,
                                        iterations,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grid)
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// Rows contributed by one condition: one per source plus a mean row.
fn score_rows(
    condition: &Condition,
    achieved_rate: f64,
    scores: &SeparationScores,
    wiener: &SeparationScores,
) -> String {
    let prefix = condition.prefix();
    let mut rows = String::new();
    for (j, (s, w)) in scores.per_source.iter().zip(&wiener.per_source).enumerate() {
        let delta = match (s.sdr_db, w.sdr_db) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        rows.push_str(&format!(
            "{prefix},{achieved_rate:.4},{j},{},{},{},{},{}\n",
            cell(s.sdr_db),
            cell(s.sir_db),
            cell(s.sar_db),
            cell(w.sdr_db),
            cell(delta)
        ));
    }
    let delta = match (scores.mean_sdr(), wiener.mean_sdr()) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    rows.push_str(&format!(
        "{prefix},{achieved_rate:.4},mean,{},{},{},{},{}\n",
        cell(scores.mean_sdr()),
        cell(scores.mean_sir()),
        cell(scores.mean_sar()),
        cell(wiener.mean_sdr()),
        cell(delta)
    ));
    rows
}

fn run_condition(
    condition: &Condition,
    mix: &Signal<f64>,
    stems: &[Signal<f64>],
    wiener: &SeparationScores,
) -> Result<String> {
    let cfg = CodecConfig {
        window_large: WINDOW_LARGE,
        window_small: WINDOW_SMALL,
        overlap: condition.overlap,
        dual: condition.dual,
        quant_step_db: condition.step_db,
        activity_threshold: condition.rho,
        num_bands_large: condition.bands,
        ..CodecConfig::default()
    };
    let controlled = rate_control(mix, stems, &cfg, condition.target_rate)?;
    let params = ReconParams {
        divisor: condition.divisor,
        ..ReconParams::default()
    }
    .with_iterations(condition.iterations);
    let estimates = issir_reconstruct(mix, &controlled.encoded.bundle, &params)?;
    let scores = evaluate(stems, &estimates, NUM_DELAYS)?;
    Ok(score_rows(condition, controlled.achieved_rate, &scores, wiener))
}

pub fn run(args: &Args) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("read {}", args.config.display()))?;
    let config = parse_config(&text)?;
    let grid = conditions(&config)?;

    let stems = read_all_same_rate(&args.stems)?;
    let mix = Signal::mix(&stems);

    // The oracle baseline depends only on the analysis overlap, so score it
    // once per distinct overlap instead of once per condition.
    let mut wiener_by_overlap: HashMap<String, SeparationScores> = HashMap::new();
    for condition in &grid {
        if wiener_by_overlap.contains_key(&condition.overlap_label) {
            continue;
        }
        let spec = GridSpec::new(
            WINDOW_LARGE,
            condition.overlap,
            mix.sample_rate,
            mix.samples.len(),
        )?;
        let estimates = oracle_wiener(&mix, &stems, &Grid::Uniform(spec))?;
        wiener_by_overlap.insert(
            condition.overlap_label.clone(),
            evaluate(&stems, &estimates, NUM_DELAYS)?,
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .context("build worker pool")?;
    let row_groups: Vec<String> = pool.install(|| {
        grid.par_iter()
            .map(|condition| {
                run_condition(
                    condition,
                    &mix,
                    &stems,
                    &wiener_by_overlap[&condition.overlap_label],
                )
                .with_context(|| condition.describe())
            })
            .collect::<Result<_>>()
    })?;

    let mut table = String::from(
        "target_rate,step_db,rho,divisor,overlap,bands,dual,iterations,achieved_rate,\
         source,sdr_db,sir_db,sar_db,wiener_sdr_db,delta_sdr_db\n",
    );
    for rows in &row_groups {
        table.push_str(rows);
    }
    fs::write(&args.out, table).with_context(|| format!("write {}", args.out.display()))?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out.display().to_string(),
            "conditions": grid.len(),
            "sources": stems.len(),
        })
    );
    Ok(())
}
