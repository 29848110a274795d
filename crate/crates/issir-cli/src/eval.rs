//! Score separated estimates against reference stems.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use issir::metrics::evaluate;

use crate::wav::read_all_same_rate;

#[derive(clap::Args)]
pub struct Args {
    /// Reference stem WAVs, in source order
    #[arg(long, num_args = 1.., required = true)]
    refs: Vec<PathBuf>,
    /// Estimate WAVs, matching the reference order
    #[arg(long, num_args = 1.., required = true)]
    ests: Vec<PathBuf>,
    /// Highest filter delay (in samples) the reference projection allows
    #[arg(long, default_value_t = 512)]
    delays: usize,
    /// Write the score table to this CSV file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn run(args: &Args) -> Result<()> {
    if args.refs.len() != args.ests.len() {
        bail!(
            "{} references but {} estimates",
            args.refs.len(),
            args.ests.len()
        );
    }
    let refs = read_all_same_rate(&args.refs)?;
    let ests = read_all_same_rate(&args.ests)?;
    if refs[0].sample_rate != ests[0].sample_rate {
        bail!("references and estimates must share one sample rate");
    }
    let scores = evaluate(&refs, &ests, args.delays)?;

    let mut table = String::from("source,sdr_db,sir_db,sar_db\n");
    for (j, s) in scores.per_source.iter().enumerate() {
        table.push_str(&format!(
            "{j},{},{},{}\n",
            cell(s.sdr_db),
            cell(s.sir_db),
            cell(s.sar_db)
        ));
    }
    table.push_str(&format!(
        "mean,{},{},{}\n",
        cell(scores.mean_sdr()),
        cell(scores.mean_sir()),
        cell(scores.mean_sar())
    ));

    match &args.out {
        Some(path) => fs::write(path, table)
            .with_context(|| format!("write {}", path.display()))?,
        None => print!("{table}"),
    }
    Ok(())
}
