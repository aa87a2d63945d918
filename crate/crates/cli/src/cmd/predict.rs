use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use uaed::annotations::{DatasetIndex, INDEX_FILE};
use uaed::imageio::{read_prob, read_rgb, write_gray16};
use uaed::model::read_archive;
use uaed::rng::derive_seed;
use uaed::training::{predict, Checkpoint, PredictMode};
use uaed::Model32;

use super::{EDGE_FILE, UNCERTAINTY_FILE, UNCERTAINTY_FULL_SCALE};
use crate::manifest::RunManifest;
use crate::OutArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// One draw `sigmoid(mu + eps * sigma)` per image.
    Stochastic,
    /// `sigmoid(mu)`.
    Mean,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training checkpoint or saved model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// An RGB PNG, a directory of PNGs, or a dataset directory with `index.json`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Stochastic)]
    pub mode: Mode,
    /// Base seed of the per-image noise (stochastic mode).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn load_model(path: &Path) -> Result<Model32> {
    let archive = read_archive::<f32>(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(match archive.header.get("kind").and_then(|k| k.as_str()) {
        Some("checkpoint") => Checkpoint::from_archive(&archive)?.model,
        _ => Model32::from_archive(&archive)?,
    })
}

/// `(image_id, path)` pairs, sorted by id.
fn list_images(input: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = if input.join(INDEX_FILE).is_file() {
        DatasetIndex::read(input)?
            .images
            .into_iter()
            .map(|e| (e.image_id, input.join(e.image)))
            .collect::<Vec<_>>()
    } else if input.is_dir() {
        let mut v = Vec::new();
        for entry in fs::read_dir(input).with_context(|| format!("listing {}", input.display()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                v.push((stem(&path)?, path));
            }
        }
        v
    } else if input.is_file() {
        vec![(stem(input)?, input.to_path_buf())]
    } else {
        bail!("input {} does not exist", input.display());
    };
    if out.is_empty() {
        bail!("no PNG images found in {}", input.display());
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("unusable file name {}", path.display()))
}

pub fn run(args: Args, started: Instant) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let images = list_images(&args.input)?;
    let out = args.out.resolve("predict");

    let mut m = RunManifest::new("predict");
    m.seed = (args.mode == Mode::Stochastic).then_some(args.seed);
    m.input("checkpoint", &args.checkpoint).input("input", &args.input);
    for (i, (id, path)) in images.iter().enumerate() {
        let image = read_rgb::<f32>(path)?;
        let mode = match args.mode {
            Mode::Mean => PredictMode::Mean,
            Mode::Stochastic => PredictMode::Stochastic {
                seed: derive_seed(args.seed, &[i as u64]),
            },
        };
        let p = predict(&model, &image, mode)?;
        let dir = out.join(id);
        let edge_path = dir.join(EDGE_FILE);
        write_gray16(&edge_path, &p.edge.map(|&v| v as f64), 1.0)?;
        write_gray16(&dir.join(UNCERTAINTY_FILE), &p.uncertainty.map(|&v| v as f64), UNCERTAINTY_FULL_SCALE)?;
        if read_prob(&edge_path)?.dims() != image.channel_grid(0).dims() {
            bail!("{}: written edge map has the wrong size", edge_path.display());
        }
        m.outputs.push(format!("{id}/{EDGE_FILE}"));
        m.outputs.push(format!("{id}/{UNCERTAINTY_FILE}"));
    }
    m.detail("mode", args.mode.to_possible_value().map(|v| v.get_name().to_string()))
        .detail("edge_full_scale", 1.0)
        .detail("uncertainty_full_scale", UNCERTAINTY_FULL_SCALE)
        .detail("bit_depth", 16)
        .detail("per_image_seed", "derive_seed(seed, [index in sorted id order])");
    m.finish(&out, started)?;
    println!("wrote predictions for {} images to {}", images.len(), out.display());
    Ok(())
}
