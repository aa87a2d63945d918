//! The optimization loop: per-step annotation sampling, epoch-indexed
//! `β_t`, per-epoch checkpoints and seeded, order-stable execution.
//!
//! Randomness is derived from `(seed, epoch)` only, so a run resumed from
//! the checkpoint of epoch `k` replays exactly what an uninterrupted run
//! does from epoch `k` on. Batch elements are processed in parallel and
//! their gradients summed in batch order.

mod augment;
mod checkpoint;

pub use augment::Augmentation;
pub use checkpoint::{Checkpoint, Progress};

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotations::{
    fuse_majority, label_variance, sample_annotation_index, weight_map, weight_map_fused, AnnotationSet,
    DEFAULT_FUSION_THRESHOLD,
};
use crate::annotations::Sample;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::losses::{balanced_bce, total_loss, LossConfig, LossInputs, LossReport, WeightingMode, DEFAULT_EPS_CLAMP};
use crate::model::{sample_backward, sample_prediction, std_from_var, Branches, ModelConfig, Uaed};
use crate::nn::Grads;
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_seed, derived_rng};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Tensor;

const STREAM_INIT: u64 = 0;
const STREAM_EPOCH: u64 = 1;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const NONFINITE_DUMP: &str = "nonfinite_dump.json";

/// Supervision used for the edge term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// One annotation drawn per step, both branches, variance supervision.
    Sampled,
    /// Majority-fused label with ignored pixels, mean branch only (baseline).
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "defaults::optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "defaults::crop_size")]
    pub crop_size: usize,
    #[serde(default = "defaults::weighting_mode")]
    pub weighting_mode: WeightingMode,
    #[serde(default = "defaults::label_mode")]
    pub label_mode: LabelMode,
    #[serde(default = "defaults::fusion_threshold")]
    pub fusion_threshold: f64,
    #[serde(default = "defaults::eps_clamp")]
    pub eps_clamp: f64,
    /// Architecture. Its `seed` is mixed into the training seed to derive the
    /// initialization stream rather than used directly.
    #[serde(default)]
    pub model: ModelConfig,
}

mod defaults {
    use super::*;
    pub fn epochs() -> usize {
        15
    }
    pub fn batch_size() -> usize {
        4
    }
    pub fn learning_rate() -> f64 {
        1e-4
    }
    pub fn weight_decay() -> f64 {
        5e-4
    }
    pub fn optimizer() -> OptimizerKind {
        OptimizerKind::Adam
    }
    pub fn crop_size() -> usize {
        64
    }
    pub fn weighting_mode() -> WeightingMode {
        WeightingMode::Progressive
    }
    pub fn label_mode() -> LabelMode {
        LabelMode::Sampled
    }
    pub fn fusion_threshold() -> f64 {
        DEFAULT_FUSION_THRESHOLD
    }
    pub fn eps_clamp() -> f64 {
        DEFAULT_EPS_CLAMP
    }
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            weight_decay: defaults::weight_decay(),
            optimizer: defaults::optimizer(),
            crop_size: defaults::crop_size(),
            weighting_mode: defaults::weighting_mode(),
            label_mode: defaults::label_mode(),
            fusion_threshold: defaults::fusion_threshold(),
            eps_clamp: defaults::eps_clamp(),
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !(self.fusion_threshold > 0.0 && self.fusion_threshold <= 1.0) {
            return Err(Error::invalid("fusion_threshold must lie in (0, 1]"));
        }
        self.model.validate()?;
        let s = self.model.encoder.stride();
        if !self.crop_size.is_multiple_of(s) || self.crop_size < 2 * s {
            return Err(Error::invalid(format!(
                "crop_size {} must be a multiple of the encoder stride {s} and at least {}",
                self.crop_size,
                2 * s
            )));
        }
        if self.label_mode == LabelMode::Fused && self.weighting_mode != WeightingMode::None {
            return Err(Error::invalid("label_mode fused has no variance branch; set weighting_mode to none"));
        }
        self.loss_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            total_epochs: self.epochs,
            weighting_mode: self.weighting_mode,
            eps_clamp: self.eps_clamp,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.learning_rate, self.weight_decay)
    }

    /// Model configuration with the derived initialization seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: derive_seed(self.seed, &[STREAM_INIT, self.model.seed]),
            ..self.model.clone()
        }
    }

    /// Hex SHA-256 of the serialized configuration.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One augmented training example.
#[derive(Debug, Clone)]
pub struct TrainItem<S> {
    pub image: Tensor<S>,
    pub annotations: AnnotationSet,
}

impl<S: Scalar> TrainItem<S> {
    pub fn augmented<R: Rng + ?Sized>(sample: &Sample<S>, crop: usize, rng: &mut R) -> Result<Self> {
        let (_, h, w) = sample.image.chw();
        let aug = Augmentation::draw(h, w, crop, rng)?;
        Ok(Self {
            image: aug.apply_image(&sample.image),
            annotations: aug.apply_annotations(&sample.annotations),
        })
    }
}

/// Which annotation supervised an item (`None` for the fused label).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub image_id: String,
    pub annotation: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Mean over the batch of per-image reports.
    pub report: LossReport,
    pub selections: Vec<Selection>,
}

/// Everything needed to diagnose a non-finite step.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostic {
    pub epoch: usize,
    pub step: u64,
    pub items: Vec<ItemDiagnostic>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ItemDiagnostic {
    pub image_id: String,
    pub annotation: Option<usize>,
    pub report: LossReport,
    pub image_finite: bool,
    pub mu_min: f64,
    pub mu_max: f64,
    pub var_min: f64,
    pub var_max: f64,
    pub var_mean: f64,
    pub grads_finite: bool,
}

struct ItemOutput<S> {
    grads: Grads<S>,
    report: LossReport,
    diagnostic: ItemDiagnostic,
}

fn stats<S: Scalar>(g: &Grid<S>) -> (f64, f64, f64) {
    let v: Vec<f64> = g.as_slice().iter().map(|x| x.as_f64()).collect();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    (min, max, mean)
}

/// Standard normal noise of the given size.
pub fn standard_normal_grid<S: Scalar, R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Grid<S> {
    Grid::from_fn(h, w, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        S::of(z)
    })
}

fn item_step<S: Scalar>(model: &Uaed<S>, item: &TrainItem<S>, epoch: usize, config: &TrainConfig, inv_b: S, seed: u64) -> Result<ItemOutput<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_cfg = config.loss_config();
    let beta_t = loss_cfg.beta(epoch)?;
    let mut grads = model.params().zero_grads();
    let (report, annotation, pred) = match config.label_mode {
        LabelMode::Sampled => {
            let k = sample_annotation_index(&item.annotations, &mut rng);
            let label = &item.annotations.maps()[k];
            let weights = weight_map::<S>(label)?;
            let var_target = label_variance::<S>(&item.annotations);
            let sigma_gt = var_target.map(|v| v.sqrt());
            let (pred, cache) = model.forward_train(&item.image, Branches::Both)?;
            let (h, w) = pred.dims();
            let eps = standard_normal_grid::<S, _>(h, w, &mut rng);
            let y_hat = sample_prediction(&pred, Some(&eps))?;
            let sigma_hat = std_from_var(&pred.var);
            let inputs = LossInputs {
                pred: &y_hat,
                label,
                weights: &weights,
                var_pred: &pred.var,
                var_target: &var_target,
                sigma_hat: &sigma_hat,
                sigma_gt: Some(&sigma_gt),
            };
            let (report, g) = total_loss(&inputs, epoch, &loss_cfg)?;
            let (mut d_mu, mut d_var) = sample_backward(&pred, Some(&eps), &y_hat, &g.d_pred);
            let through_sigma = config.weighting_mode.propagates_sigma_grad();
            let two = S::of(2.0);
            for j in 0..d_var.len() {
                let mut dv = d_var.as_slice()[j] + g.d_var.as_slice()[j];
                if through_sigma {
                    dv += g.d_sigma.as_slice()[j] / (two * sigma_hat.as_slice()[j]);
                }
                d_var.as_mut_slice()[j] = dv * inv_b;
                d_mu.as_mut_slice()[j] *= inv_b;
            }
            model.backward(&cache, &d_mu, Some(&d_var), &mut grads);
            (report, Some(k), pred)
        }
        LabelMode::Fused => {
            let fused = fuse_majority(&item.annotations, config.fusion_threshold)?;
            let label = fused.positives();
            let weights = weight_map_fused::<S>(&fused);
            let (pred, cache) = model.forward_train(&item.image, Branches::MeanOnly)?;
            let y_hat = pred.mu.map(|&z| sigmoid(z));
            let edge = balanced_bce(&y_hat, &label, &weights, config.eps_clamp)?;
            let d_mu = Grid::from_fn(y_hat.height(), y_hat.width(), |y, x| {
                let p = y_hat.at(y, x);
                edge.d_pred.at(y, x) * p * (S::one() - p) * inv_b
            });
            model.backward(&cache, &d_mu, None, &mut grads);
            let v = edge.value.as_f64();
            let report = LossReport {
                l_bvar: 0.0,
                l_edge: v,
                l_uedge: v,
                total: v,
                beta_t,
            };
            (report, None, pred)
        }
    };
    let (mu_min, mu_max, _) = stats(&pred.mu);
    let (var_min, var_max, var_mean) = stats(&pred.var);
    let diagnostic = ItemDiagnostic {
        image_id: item.annotations.image_id().to_string(),
        annotation,
        report,
        image_finite: item.image.all_finite(),
        mu_min,
        mu_max,
        var_min,
        var_max,
        var_mean,
        grads_finite: grads.all_finite(),
    };
    Ok(ItemOutput {
        grads,
        report,
        diagnostic,
    })
}

/// One optimizer step on a pre-augmented batch at epoch `epoch`.
///
/// A non-finite loss or gradient aborts with [`Error::NonFinite`] whose
/// diagnostic is the JSON of a [`StepDiagnostic`]; parameters are left untouched.
pub fn train_step<S: Scalar, R: Rng + ?Sized>(
    model: &mut Uaed<S>,
    optimizer: &mut Adam<S>,
    batch: &[TrainItem<S>],
    epoch: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if epoch >= config.epochs {
        return Err(Error::invalid(format!("epoch {epoch} outside [0, {})", config.epochs)));
    }
    let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
    let inv_b = S::of(1.0 / batch.len() as f64);
    let shared: &Uaed<S> = model;
    let outputs: Vec<ItemOutput<S>> = batch
        .par_iter()
        .zip(seeds)
        .map(|(item, seed)| item_step(shared, item, epoch, config, inv_b, seed))
        .collect::<Result<_>>()?;

    let mut grads = model.params().zero_grads();
    for o in &outputs {
        grads.add_assign(&o.grads);
    }
    let reports: Vec<LossReport> = outputs.iter().map(|o| o.report).collect();
    let report = LossReport::mean(&reports);
    if !report.is_finite() || !grads.all_finite() {
        let diag = StepDiagnostic {
            epoch,
            step: optimizer.step + 1,
            items: outputs.iter().map(|o| o.diagnostic.clone()).collect(),
        };
        return Err(Error::NonFinite {
            epoch,
            step: (optimizer.step + 1) as usize,
            diagnostic: serde_json::to_string(&diag)?,
        });
    }
    optimizer.update(model.params_mut(), &grads);
    let selections = outputs
        .iter()
        .map(|o| Selection {
            image_id: o.diagnostic.image_id.clone(),
            annotation: o.diagnostic.annotation,
        })
        .collect();
    Ok(StepOutput { report, selections })
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub beta_t: f64,
    pub l_bvar: f64,
    pub l_edge: f64,
    pub l_uedge: f64,
    pub total: f64,
    pub selections: Vec<Selection>,
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn checkpoint_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("epoch_{epoch:03}.ckpt"))
}

/// Training state: model, optimizer and progress.
pub struct Trainer<S> {
    config: TrainConfig,
    model: Uaed<S>,
    optimizer: Adam<S>,
    epochs_done: usize,
    step: u64,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Uaed::new(config.model_config())?;
        let optimizer = Adam::new(config.adam(), model.params());
        Ok(Self {
            config,
            model,
            optimizer,
            epochs_done: 0,
            step: 0,
        })
    }

    /// Continue from a checkpoint written under the same configuration.
    pub fn resume(config: TrainConfig, checkpoint: &Path) -> Result<Self> {
        config.validate()?;
        let ckpt = Checkpoint::<S>::load(checkpoint)?;
        let expected = config.config_hash();
        if ckpt.config_hash != expected {
            return Err(Error::ConfigMismatch {
                expected,
                found: ckpt.config_hash,
            });
        }
        Ok(Self {
            config,
            model: ckpt.model,
            optimizer: ckpt.optimizer,
            epochs_done: ckpt.progress.epoch,
            step: ckpt.progress.step,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Uaed<S> {
        &self.model
    }

    pub fn into_model(self) -> Uaed<S> {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint<S> {
        Checkpoint {
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            progress: Progress {
                epoch: self.epochs_done,
                step: self.step,
                seed: self.config.seed,
            },
            config: self.config.clone(),
            config_hash: self.config.config_hash(),
        }
    }

    fn check_dataset(&self, data: &[Sample<S>]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let c = self.config.crop_size;
        for s in data {
            let (_, h, w) = s.image.chw();
            if s.annotations.dims() != (h, w) {
                return Err(Error::ShapeMismatch(format!("{}: image and annotations differ in size", s.image_id())));
            }
            if h < c || w < c {
                return Err(Error::invalid(format!("{}: {h}x{w} is smaller than crop_size {c}", s.image_id())));
            }
        }
        Ok(())
    }

    /// Run the next epoch, calling `on_step` after every optimizer step.
    pub fn run_epoch(&mut self, data: &[Sample<S>], mut on_step: impl FnMut(&LogRecord) -> Result<()>) -> Result<()> {
        self.check_dataset(data)?;
        let epoch = self.epochs_done;
        if epoch >= self.config.epochs {
            return Err(Error::invalid("training already finished"));
        }
        let mut rng = derived_rng(self.config.seed, &[STREAM_EPOCH, epoch as u64]);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let crop = self.config.crop_size;
        for chunk in order.chunks(self.config.batch_size) {
            let aug_seeds: Vec<u64> = chunk.iter().map(|_| rng.random()).collect();
            let batch: Vec<TrainItem<S>> = chunk
                .par_iter()
                .zip(aug_seeds)
                .map(|(&i, seed)| TrainItem::augmented(&data[i], crop, &mut ChaCha8Rng::seed_from_u64(seed)))
                .collect::<Result<_>>()?;
            let out = train_step(&mut self.model, &mut self.optimizer, &batch, epoch, &self.config, &mut rng)?;
            self.step += 1;
            let r = out.report;
            on_step(&LogRecord {
                step: self.step,
                epoch,
                beta_t: r.beta_t,
                l_bvar: r.l_bvar,
                l_edge: r.l_edge,
                l_uedge: r.l_uedge,
                total: r.total,
                selections: out.selections,
            })?;
        }
        self.epochs_done += 1;
        Ok(())
    }

    /// Train up to `end_epoch` completed epochs (capped at the configured
    /// total). With `out_dir`, each step is appended to the JSON-lines log
    /// and a checkpoint is written after every epoch; a non-finite step
    /// writes its diagnostic next to them before the error is returned.
    pub fn fit_until(&mut self, data: &[Sample<S>], end_epoch: usize, out_dir: Option<&Path>) -> Result<Vec<LogRecord>> {
        self.check_dataset(data)?;
        let end = end_epoch.min(self.config.epochs);
        let mut log = match out_dir {
            Some(dir) => Some(self.open_log(dir)?),
            None => None,
        };
        let mut records = Vec::new();
        while self.epochs_done < end {
            let res = self.run_epoch(data, |rec| {
                if let (Some(w), Some(dir)) = (log.as_mut(), out_dir) {
                    let path = dir.join(LOG_FILE);
                    serde_json::to_writer(&mut *w, rec)?;
                    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
                }
                records.push(rec.clone());
                Ok(())
            });
            if let (Err(Error::NonFinite { diagnostic, .. }), Some(dir)) = (&res, out_dir) {
                let path = dir.join(NONFINITE_DUMP);
                fs::write(&path, diagnostic).map_err(|e| Error::io(&path, e))?;
            }
            res?;
            if let Some(dir) = out_dir {
                self.checkpoint().save(&checkpoint_path(dir, self.epochs_done))?;
            }
        }
        Ok(records)
    }

    pub fn fit(&mut self, data: &[Sample<S>], out_dir: Option<&Path>) -> Result<Vec<LogRecord>> {
        self.fit_until(data, self.config.epochs, out_dir)
    }

    /// Open the log for appending, first dropping records past the current
    /// step (left over from an interrupted epoch).
    fn open_log(&self, dir: &Path) -> Result<BufWriter<File>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOG_FILE);
        let kept: Vec<LogRecord> = if self.step > 0 && path.exists() {
            read_log(&path)?.into_iter().filter(|r| r.step <= self.step).collect()
        } else {
            Vec::new()
        };
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for r in &kept {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let file = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(BufWriter::new(file))
    }
}

/// Convenience wrapper: fresh trainer, full schedule.
pub fn fit<S: Scalar>(data: &[Sample<S>], config: &TrainConfig, out_dir: Option<&Path>) -> Result<(Uaed<S>, Vec<LogRecord>)> {
    let mut trainer = Trainer::new(config.clone())?;
    let log = trainer.fit(data, out_dir)?;
    Ok((trainer.into_model(), log))
}

/// How an edge map is drawn from the predicted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PredictMode {
    /// `ε = 0`.
    Mean,
    /// `ε` drawn from a stream seeded with `seed`.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S> {
    /// Edge probability `Ŷ`.
    pub edge: Grid<S>,
    /// Predicted variance `σ̂²`.
    pub uncertainty: Grid<S>,
    /// Mean logits `μ̂`.
    pub mu: Grid<S>,
    /// Noise used (zeros in mean mode).
    pub epsilon: Grid<S>,
}

/// Replicate-pad a `[3, h, w]` image on the bottom and right to sides that
/// are multiples of `stride` and at least `2 * stride`.
pub fn pad_to_stride<S: Scalar>(image: &Tensor<S>, stride: usize) -> Tensor<S> {
    let (c, h, w) = image.chw();
    let round = |n: usize| n.div_ceil(stride).max(2) * stride;
    let (ph, pw) = (round(h), round(w));
    if (ph, pw) == (h, w) {
        return image.clone();
    }
    let channels: Vec<Grid<S>> = (0..c)
        .map(|i| {
            let g = image.channel_grid(i);
            Grid::from_fn(ph, pw, |y, x| g.at(y.min(h - 1), x.min(w - 1)))
        })
        .collect();
    Tensor::from_channels(&channels).expect("channels share dims")
}

pub fn predict<S: Scalar>(model: &Uaed<S>, image: &Tensor<S>, mode: PredictMode) -> Result<Prediction<S>> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 || shape[1] == 0 || shape[2] == 0 {
        return Err(Error::invalid(format!("expected a [3, h, w] image, got {shape:?}")));
    }
    let (_, h, w) = image.chw();
    let padded = pad_to_stride(image, model.config().encoder.stride());
    let dist = model.predict_distribution(&padded)?;
    let mu = dist.mu.crop(0, 0, h, w);
    let var = dist.var.crop(0, 0, h, w);
    let epsilon = match mode {
        PredictMode::Mean => Grid::filled(h, w, S::zero()),
        PredictMode::Stochastic { seed } => standard_normal_grid(h, w, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let edge = Grid::from_fn(h, w, |y, x| sigmoid(mu.at(y, x) + epsilon.at(y, x) * var.at(y, x).sqrt()));
    Ok(Prediction {
        edge,
        uncertainty: var,
        mu,
        epsilon,
    })
}

#[cfg(test)]
mod tests;
