use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use uaed::annotations::load_dataset;
use uaed::eval::{evaluate, write_report, EvalConfig, Matcher, DEFAULT_THRESHOLDS, DEFAULT_TOLERANCE};
use uaed::imageio::read_prob;

use super::EDGE_FILE;
use crate::manifest::{hash_json, RunManifest};
use crate::OutArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    Greedy,
    Exact,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Prediction directory with `<image_id>/edge.png`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset directory with the annotations.
    #[arg(long)]
    pub data: PathBuf,
    /// Match distance as a fraction of the image diagonal.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLDS)]
    pub thresholds: usize,
    #[arg(long, value_enum, default_value_t = MatcherArg::Greedy)]
    pub matcher: MatcherArg,
    /// Skip non-maximum suppression.
    #[arg(long)]
    pub no_nms: bool,
    /// Thin every binarized map (for thick predictions).
    #[arg(long)]
    pub thin_binary: bool,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn run(args: Args, started: Instant) -> Result<()> {
    let config = EvalConfig {
        tolerance: args.tolerance,
        n_thresholds: args.thresholds,
        matcher: match args.matcher {
            MatcherArg::Greedy => Matcher::Greedy,
            MatcherArg::Exact => Matcher::Exact,
        },
        nms: !args.no_nms,
        thin_binary: args.thin_binary,
    };
    config.validate()?;
    let data = load_dataset::<f32>(&args.data).with_context(|| format!("loading dataset {}", args.data.display()))?;
    let mut items = Vec::with_capacity(data.len());
    for s in data {
        let path = args.pred.join(s.image_id()).join(EDGE_FILE);
        let prob = read_prob(&path).with_context(|| format!("no usable prediction for image {}", s.image_id()))?;
        items.push((prob, s.annotations));
    }
    let report = evaluate(&items, &config)?;
    let r = &report.result;
    if !r.is_finite() {
        bail!(
            "non-finite metric: ODS {} (threshold {}), OIS {}, AP {} over {} images",
            r.ods_f,
            r.ods_threshold,
            r.ois_f,
            r.ap,
            report.n_images
        );
    }
    let out = args.out.resolve("eval");
    write_report(&out, &report)?;

    let mut m = RunManifest::new("eval");
    m.config_hash = Some(hash_json(&config));
    m.input("pred", &args.pred).input("data", &args.data);
    m.outputs = vec!["eval.json".into(), "pr.csv".into()];
    m.detail("ods", r.ods_f).detail("ois", r.ois_f).detail("ap", r.ap);
    m.finish(&out, started)?;
    println!(
        "ODS {:.4} (t={:.2})  OIS {:.4}  AP {:.4}  over {} images",
        r.ods_f, r.ods_threshold, r.ois_f, r.ap, report.n_images
    );
    Ok(())
}
