use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use uaed::annotations::INDEX_FILE;
use uaed::synth::{generate_dataset, SynthConfig};

use crate::manifest::{hash_json, load_config, RunManifest};
use crate::OutArg;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON dataset config (`seed` and `n_images` are required).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn run(args: Args, started: Instant) -> Result<()> {
    let config: SynthConfig = load_config(&args.config)?;
    config.validate()?;
    let out = args.out.resolve("synth");
    let index = generate_dataset(&config, &out)?;

    let mut m = RunManifest::new("synth");
    m.config_hash = Some(hash_json(&config));
    m.seed = Some(config.seed);
    m.input("config", &args.config);
    m.outputs.push(INDEX_FILE.to_string());
    for e in &index.images {
        m.outputs.push(e.image.clone());
        m.outputs.push(e.annotations.clone());
    }
    m.detail("n_images", index.images.len()).detail("k", config.k());
    m.finish(&out, started)?;
    println!("wrote {} images to {}", index.images.len(), out.display());
    Ok(())
}
