use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use uaed::eval::{read_report, EvalReport};
use uaed::imageio::{read_prob, write_rgb8};
use uaed::Grid;

use super::{EDGE_FILE, UNCERTAINTY_FILE, UNCERTAINTY_FULL_SCALE};
use crate::manifest::RunManifest;
use crate::OutArg;

pub const PR_FILE: &str = "pr.svg";
pub const OVERLAY_SUFFIX: &str = "_uncertainty.png";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `eval.json` to draw as a precision-recall curve.
    #[arg(long, required_unless_present = "pred")]
    pub eval: Option<PathBuf>,
    /// Prediction directory; every `<image_id>/uncertainty.png` gets an overlay.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn run(args: Args, started: Instant) -> Result<()> {
    let out = args.out.resolve("plot");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut m = RunManifest::new("plot");
    if let Some(path) = &args.eval {
        let report = read_report(path).with_context(|| format!("reading {}", path.display()))?;
        fs::write(out.join(PR_FILE), pr_svg(&report)).with_context(|| format!("writing {PR_FILE}"))?;
        m.input("eval", path);
        m.outputs.push(PR_FILE.into());
    }
    if let Some(dir) = &args.pred {
        let ids = prediction_ids(dir)?;
        if ids.is_empty() {
            bail!("no {UNCERTAINTY_FILE} found under {}", dir.display());
        }
        for id in ids {
            let edge = read_prob(&dir.join(&id).join(EDGE_FILE))?;
            let var = read_prob(&dir.join(&id).join(UNCERTAINTY_FILE))?;
            let name = format!("{id}{OVERLAY_SUFFIX}");
            write_rgb8(&out.join(&name), &overlay(&edge, &var)?)?;
            m.outputs.push(name);
        }
        m.input("pred", dir);
        m.detail("uncertainty_full_scale", UNCERTAINTY_FULL_SCALE);
    }
    let n = m.outputs.len();
    m.finish(&out, started)?;
    println!("wrote {n} plots to {}", out.display());
    Ok(())
}

fn prediction_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.join(UNCERTAINTY_FILE).is_file() {
            if let Some(id) = path.file_name().and_then(|s| s.to_str()) {
                ids.push(id.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Piecewise-linear dark-blue → red → yellow ramp on `[0, 1]`.
fn heat(t: f64) -> [f64; 3] {
    const STOPS: [[f64; 3]; 4] = [[0.05, 0.03, 0.25], [0.55, 0.05, 0.45], [0.95, 0.35, 0.05], [1.0, 0.95, 0.3]];
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [0, 1, 2].map(|c| a[c] + f * (b[c] - a[c]))
}

/// Uncertainty (already scaled to `[0, 1]`) in false color over the
/// inverted edge map; opacity grows with the uncertainty.
fn overlay(edge: &Grid<f64>, var: &Grid<f64>) -> Result<RgbImage> {
    if edge.dims() != var.dims() {
        bail!("edge and uncertainty maps differ in size");
    }
    let (h, w) = edge.dims();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let base = 1.0 - 0.6 * edge.at(y, x);
        let u = var.at(y, x);
        let alpha = (2.0 * u).min(1.0);
        let c = heat(u);
        Rgb([0, 1, 2].map(|i| ((base * (1.0 - alpha) + c[i] * alpha) * 255.0).round() as u8))
    }))
}

/// Precision-recall curve with iso-F contours and the ODS point.
pub fn pr_svg(report: &EvalReport) -> String {
    const SIZE: f64 = 420.0;
    const PAD: f64 = 50.0;
    let px = |r: f64| PAD + r * SIZE;
    let py = |p: f64| PAD + (1.0 - p) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#ddd"/><line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##,
            x = px(v),
            y = py(v),
            x0 = px(0.0),
            x1 = px(1.0),
            y0 = py(0.0),
            y1 = py(1.0)
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{v:.1}</text>"#, px(v), py(0.0) + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, px(0.0) - 6.0, py(v) + 4.0);
    }
    // iso-F contours: p = f r / (2r - f)
    for i in 1..10 {
        let f = i as f64 / 10.0;
        let pts: Vec<String> = (0..=100)
            .map(|k| f / 2.0 + (1.0 - f / 2.0) * k as f64 / 100.0)
            .filter_map(|r| {
                let p = f * r / (2.0 * r - f);
                (0.0..=1.0).contains(&p).then(|| format!("{:.2},{:.2}", px(r), py(p)))
            })
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#9c9" stroke-dasharray="3,3"/>"##, pts.join(" "));
    }
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#333"/>"##,
        px(0.0),
        py(1.0)
    );
    let r = &report.result;
    let curve: Vec<String> = r
        .pr_points
        .iter()
        .filter(|p| p.precision > 0.0 || p.recall > 0.0)
        .map(|p| format!("{:.2},{:.2}", px(p.recall), py(p.precision)))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#c22" stroke-width="2"/>"##, curve.join(" "));
    if let Some(best) = r.pr_points.iter().find(|p| p.threshold == r.ods_threshold) {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#c22"/>"##, px(best.recall), py(best.precision));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Recall</text>"#, px(0.5), total - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">Precision</text>"#,
        py(0.5),
        py(0.5)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">ODS {:.3}  OIS {:.3}  AP {:.3}  ({} images)</text>"#,
        px(0.0),
        PAD - 14.0,
        r.ods_f,
        r.ois_f,
        r.ap,
        report.n_images
    );
    s.push_str("</svg>\n");
    s
}
