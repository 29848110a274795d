//! Synthesize one of the bundled test scenes as WAV files.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use issir::fixtures::{five_source_scene, percussive_scene, two_source_scene, Scene};

use crate::wav::write_float;

#[derive(Clone, Copy, ValueEnum)]
pub enum SceneKind {
    /// 5 s, two heavily overlapping sources
    Two,
    /// 15 s, five musical stems
    Five,
    /// 10 s, click train and percussion against tonal stems
    Percussive,
}

#[derive(clap::Args)]
pub struct Args {
    /// Scene to synthesize
    #[arg(long, value_enum)]
    scene: SceneKind,
    /// Output directory; created if missing
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: &Args) -> Result<()> {
    let scene: Scene = match args.scene {
        SceneKind::Two => two_source_scene(),
        SceneKind::Five => five_source_scene(),
        SceneKind::Percussive => percussive_scene(),
    };
    fs::create_dir_all(&args.out)
        .with_context(|| format!("create directory {}", args.out.display()))?;
    let mut stems = Vec::new();
    for (label, stem) in scene.labels.iter().zip(&scene.stems) {
        let path = args.out.join(format!("{label}.wav"));
        write_float(&path, stem)?;
        stems.push(path.display().to_string());
    }
    let mix_path = args.out.join("mix.wav");
    write_float(&mix_path, &scene.mix)?;
    println!(
        "{}",
        serde_json::json!({
            "mix": mix_path.display().to_string(),
            "stems": stems,
            "sample_rate": scene.sample_rate(),
            "duration_secs": scene.mix.len() as f64 / scene.sample_rate() as f64,
        })
    );
    Ok(())
}
