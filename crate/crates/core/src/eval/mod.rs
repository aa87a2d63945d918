//! Boundary benchmark: NMS thinning, tolerance matching against every
//! annotation, threshold sweeps and ODS/OIS/AP.

mod matching;
mod nms;

pub use matching::{candidates, correspond, exact, greedy, hungarian, match_pixels, pixels, Candidate, Correspondence, Matcher, Pixel};
pub use nms::{edge_normals, gaussian_blur, nms_thin, thin_binary, ORIENT_SIGMA, TIE_MARGIN};

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEFAULT_TOLERANCE: f64 = 0.0075;
pub const DEFAULT_THRESHOLDS: usize = 99;
/// Recall levels of the interpolated precision average.
pub const AP_RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Match distance as a fraction of the image diagonal.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_thresholds")]
    pub n_thresholds: usize,
    #[serde(default = "default_matcher")]
    pub matcher: Matcher,
    /// Run NMS on probability maps before the sweep.
    #[serde(default = "default_true")]
    pub nms: bool,
    /// Zhang-Suen thinning of every binarized map (for thick labels).
    #[serde(default)]
    pub thin_binary: bool,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_thresholds() -> usize {
    DEFAULT_THRESHOLDS
}
fn default_matcher() -> Matcher {
    Matcher::Greedy
}
fn default_true() -> bool {
    true
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            n_thresholds: DEFAULT_THRESHOLDS,
            matcher: Matcher::Greedy,
            nms: true,
            thin_binary: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.n_thresholds == 0 {
            return Err(Error::invalid("n_thresholds must be >= 1"));
        }
        Ok(())
    }

    /// `i / (n + 1)` for `i = 1..=n`.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = self.n_thresholds;
        (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
    }

    pub fn max_dist_px(&self, h: usize, w: usize) -> f64 {
        self.tolerance * ((h * h + w * w) as f64).sqrt()
    }
}

/// Per-threshold counts for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub thresholds: Vec<f64>,
    pub tp_pred: Vec<u64>,
    pub n_pred: Vec<u64>,
    pub tp_gt: Vec<u64>,
    pub n_gt: Vec<u64>,
}

impl MatchCounts {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.thresholds.len();
        if [self.tp_pred.len(), self.n_pred.len(), self.tp_gt.len(), self.n_gt.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::invalid("count arrays differ in length"));
        }
        Ok(())
    }
}

/// `(precision, recall, F)` from raw counts with zero-denominator guards.
pub fn prf(tp_pred: u64, n_pred: u64, tp_gt: u64, n_gt: u64) -> (f64, f64, f64) {
    let p = if n_pred == 0 { 0.0 } else { tp_pred as f64 / n_pred as f64 };
    let r = if n_gt == 0 { 0.0 } else { tp_gt as f64 / n_gt as f64 };
    (p, r, f_measure(p, r))
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Binarize a thinned map at each threshold (`value >= threshold`) and match.
pub fn sweep(thinned: &Grid<f64>, annotations: &AnnotationSet, config: &EvalConfig) -> Result<MatchCounts> {
    config.validate()?;
    thinned.check_dims(&annotations.maps()[0], "prediction vs annotations")?;
    let (h, w) = thinned.dims();
    let max_dist = config.max_dist_px(h, w);
    let thresholds = config.thresholds();
    let per: Vec<Correspondence> = thresholds
        .iter()
        .map(|&t| {
            let mut bin = thinned.map(|&v| u8::from(v >= t));
            if config.thin_binary {
                bin = thin_binary(&bin);
            }
            correspond(&bin, annotations, max_dist, config.matcher)
        })
        .collect::<Result<_>>()?;
    Ok(MatchCounts {
        tp_pred: per.iter().map(|c| c.tp_pred).collect(),
        n_pred: per.iter().map(|c| c.n_pred).collect(),
        tp_gt: per.iter().map(|c| c.tp_gt).collect(),
        n_gt: per.iter().map(|c| c.n_gt).collect(),
        thresholds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ods_f: f64,
    pub ods_threshold: f64,
    pub ois_f: f64,
    pub ap: f64,
    pub pr_points: Vec<PrPoint>,
}

impl EvalResult {
    pub fn is_finite(&self) -> bool {
        [self.ods_f, self.ods_threshold, self.ois_f, self.ap].iter().all(|v| v.is_finite())
            && self.pr_points.iter().all(|p| p.precision.is_finite() && p.recall.is_finite())
    }
}

/// Index of the first maximum of `f` over thresholds.
fn best_index(f: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in f.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Mean over recall levels `r = 0, 0.01, ..., 1` of the best precision at
/// recall `>= r` (0 where no point reaches `r`).
pub fn interpolated_ap(points: &[PrPoint]) -> f64 {
    let n = AP_RECALL_POINTS;
    let sum: f64 = (0..n)
        .map(|i| {
            let r = i as f64 / (n - 1) as f64;
            points
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum();
    sum / n as f64
}

pub fn compute_metrics(per_image: &[MatchCounts]) -> Result<EvalResult> {
    let first = per_image.first().ok_or_else(|| Error::invalid("no images to evaluate"))?;
    for c in per_image {
        c.check()?;
        if c.thresholds != first.thresholds {
            return Err(Error::invalid("images were swept at different thresholds"));
        }
    }
    let n = first.len();
    let sum = |f: fn(&MatchCounts) -> &Vec<u64>, t: usize| per_image.iter().map(|c| f(c)[t]).sum::<u64>();
    let pr_points: Vec<PrPoint> = (0..n)
        .map(|t| {
            let (p, r, f) = prf(
                sum(|c| &c.tp_pred, t),
                sum(|c| &c.n_pred, t),
                sum(|c| &c.tp_gt, t),
                sum(|c| &c.n_gt, t),
            );
            PrPoint {
                threshold: first.thresholds[t],
                precision: p,
                recall: r,
                f,
            }
        })
        .collect();
    let (ods_i, ods_f) = best_index(pr_points.iter().map(|p| p.f));

    let mut acc = [0u64; 4];
    for c in per_image {
        let (t, _) = best_index((0..n).map(|t| prf(c.tp_pred[t], c.n_pred[t], c.tp_gt[t], c.n_gt[t]).2));
        acc[0] += c.tp_pred[t];
        acc[1] += c.n_pred[t];
        acc[2] += c.tp_gt[t];
        acc[3] += c.n_gt[t];
    }
    let (_, _, ois_f) = prf(acc[0], acc[1], acc[2], acc[3]);
    Ok(EvalResult {
        ods_f,
        ods_threshold: pr_points[ods_i].threshold,
        ois_f,
        ap: interpolated_ap(&pr_points),
        pr_points,
    })
}

/// Best single-image score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image_id: String,
    pub best_f: f64,
    pub best_threshold: f64,
}

/// Everything written to `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub n_images: usize,
    #[serde(flatten)]
    pub result: EvalResult,
    pub per_image: Vec<ImageScore>,
}

/// Thin (if configured) and sweep one probability map.
pub fn evaluate_image(prob: &Grid<f64>, annotations: &AnnotationSet, config: &EvalConfig) -> Result<MatchCounts> {
    if prob.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!("{}: probabilities outside [0, 1]", annotations.image_id())));
    }
    let thinned = if config.nms { nms_thin(prob) } else { prob.clone() };
    sweep(&thinned, annotations, config)
}

/// Evaluate `(probability map, annotations)` pairs, in parallel per image.
pub fn evaluate(items: &[(Grid<f64>, AnnotationSet)], config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let counts: Vec<MatchCounts> = items
        .par_iter()
        .map(|(p, a)| evaluate_image(p, a, config))
        .collect::<Result<_>>()?;
    let result = compute_metrics(&counts)?;
    let per_image = items
        .iter()
        .zip(&counts)
        .map(|((_, a), c)| {
            let (t, f) = best_index((0..c.len()).map(|t| prf(c.tp_pred[t], c.n_pred[t], c.tp_gt[t], c.n_gt[t]).2));
            ImageScore {
                image_id: a.image_id().to_string(),
                best_f: f,
                best_threshold: c.thresholds[t],
            }
        })
        .collect();
    Ok(EvalReport {
        config: config.clone(),
        n_images: items.len(),
        result,
        per_image,
    })
}

/// Write `eval.json` and `pr.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("eval.json");
    fs::write(&json, serde_json::to_vec_pretty(report)?).map_err(|e| Error::io(&json, e))?;
    let csv = dir.join("pr.csv");
    let mut f = fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    let mut body = String::from("threshold,precision,recall,f\n");
    for p in &report.result.pr_points {
        body.push_str(&format!("{},{},{},{}\n", p.threshold, p.precision, p.recall, p.f));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(&csv, e))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
