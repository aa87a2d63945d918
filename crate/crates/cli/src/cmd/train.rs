use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use uaed::annotations::load_dataset;
use uaed::training::{checkpoint_path, TrainConfig, Trainer, CHECKPOINT_DIR, LOG_FILE};

use crate::manifest::{load_config, RunManifest};
use crate::OutArg;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON training config (`seed` is required).
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset directory containing `index.json`.
    #[arg(long)]
    pub data: PathBuf,
    /// Continue from a checkpoint written with the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn run(args: Args, started: Instant) -> Result<()> {
    let config: TrainConfig = load_config(&args.config)?;
    config.validate()?;
    let data = load_dataset::<f32>(&args.data).with_context(|| format!("loading dataset {}", args.data.display()))?;
    let out = args.out.resolve("train");

    let mut trainer = match &args.resume {
        Some(ckpt) => Trainer::<f32>::resume(config.clone(), ckpt)?,
        None => Trainer::<f32>::new(config.clone())?,
    };
    let first_epoch = trainer.epochs_done();
    let log = trainer.fit(&data, Some(&out))?;

    let mut m = RunManifest::new("train");
    m.config_hash = Some(config.config_hash());
    m.seed = Some(config.seed);
    m.input("config", &args.config).input("data", &args.data);
    if let Some(ckpt) = &args.resume {
        m.input("resume", ckpt);
    }
    m.outputs.push(LOG_FILE.to_string());
    for epoch in first_epoch + 1..=config.epochs {
        let path = checkpoint_path(&out, epoch);
        m.outputs.push(path.strip_prefix(&out).unwrap_or(&path).display().to_string());
    }
    m.detail("n_images", data.len())
        .detail("steps", trainer.steps_done())
        .detail("checkpoint_dir", CHECKPOINT_DIR);
    if let Some(last) = log.last() {
        m.detail("final_loss", last.total);
    }
    m.finish(&out, started)?;
    println!(
        "trained {} epochs ({} steps) into {}",
        config.epochs - first_epoch,
        log.len(),
        out.display()
    );
    Ok(())
}
