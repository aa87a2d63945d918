use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BlockCache, ConvBlock, Grads, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Encoder layout: a full-resolution stem followed by stages that each halve
/// the spatial resolution (1/2, 1/4, 1/8, 1/16 by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub stem_channels: usize,
    pub stage_channels: Vec<usize>,
    /// Group-norm groups; must divide every channel count.
    pub groups: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            stem_channels: 8,
            stage_channels: vec![16, 24, 32, 48],
            groups: 4,
        }
    }
}

impl EncoderConfig {
    pub fn n_stages(&self) -> usize {
        self.stage_channels.len()
    }

    /// Downsampling factor of each stage.
    pub fn scales(&self) -> Vec<usize> {
        (1..=self.n_stages()).map(|i| 1usize << i).collect()
    }

    /// Stride of the deepest stage; input sides must be multiples of it.
    pub fn stride(&self) -> usize {
        1usize << self.n_stages()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() {
            return Err(Error::invalid("encoder needs at least one stage"));
        }
        if self.groups == 0 {
            return Err(Error::invalid("groups must be positive"));
        }
        for &c in std::iter::once(&self.stem_channels).chain(&self.stage_channels) {
            if c == 0 || c % self.groups != 0 {
                return Err(Error::invalid(format!(
                    "channel count {c} is not a positive multiple of groups {}",
                    self.groups
                )));
            }
        }
        Ok(())
    }
}

/// Multi-scale features of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<S> {
    /// Full-resolution stem features.
    pub stem: Tensor<S>,
    /// One map per stage, coarsening with depth.
    pub stages: Vec<Tensor<S>>,
    /// Downsampling factor of each stage (strictly increasing, so the
    /// resolution strictly decreases).
    pub scales: Vec<usize>,
}

impl<S: Scalar> FeaturePyramid<S> {
    pub fn zeros_like(&self) -> Self {
        Self {
            stem: Tensor::zeros(self.stem.shape()),
            stages: self.stages.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            scales: self.scales.clone(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.stem.add_assign(&other.stem);
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.add_assign(b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvEncoder {
    config: EncoderConfig,
    stem: ConvBlock,
    /// (downsampling block, refinement block) per stage.
    stages: Vec<(ConvBlock, ConvBlock)>,
}

pub struct EncoderCache<S> {
    stem: BlockCache<S>,
    stages: Vec<(BlockCache<S>, BlockCache<S>)>,
}

impl ConvEncoder {
    pub fn new<S: Scalar>(params: &mut ParamSet<S>, name: &str, config: &EncoderConfig) -> Self {
        let g = config.groups;
        let stem = ConvBlock::new(params, &format!("{name}.stem"), 3, config.stem_channels, 1, g);
        let mut c_prev = config.stem_channels;
        let mut stages = Vec::new();
        for (i, &c) in config.stage_channels.iter().enumerate() {
            let down = ConvBlock::new(params, &format!("{name}.stage{i}.down"), c_prev, c, 2, g);
            let refine = ConvBlock::new(params, &format!("{name}.stage{i}.refine"), c, c, 1, g);
            stages.push((down, refine));
            c_prev = c;
        }
        Self {
            config: config.clone(),
            stem,
            stages,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.stem.param_ids();
        for (a, b) in &self.stages {
            ids.extend(a.param_ids());
            ids.extend(b.param_ids());
        }
        ids
    }

    /// Inputs must be `[3, h, w]` with both sides multiples of the deepest
    /// stride and at least twice that stride.
    pub fn check_input<S: Scalar>(&self, image: &Tensor<S>) -> Result<()> {
        let shape = image.shape();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(Error::invalid(format!("expected a [3, h, w] image, got {shape:?}")));
        }
        let s = self.config.stride();
        let (h, w) = (shape[1], shape[2]);
        if h % s != 0 || w % s != 0 || h < 2 * s || w < 2 * s {
            return Err(Error::invalid(format!(
                "image {h}x{w} must have sides divisible by {s} and at least {}",
                2 * s
            )));
        }
        Ok(())
    }

    pub fn check_pyramid<S: Scalar>(&self, pyr: &FeaturePyramid<S>) -> Result<()> {
        let (c0, h, w) = pyr.stem.chw();
        if c0 != self.config.stem_channels || pyr.stages.len() != self.config.n_stages() {
            return Err(Error::invalid("feature pyramid does not match the decoder configuration"));
        }
        for (i, (t, &c)) in pyr.stages.iter().zip(&self.config.stage_channels).enumerate() {
            let f = 1 << (i + 1);
            if t.chw() != (c, h / f, w / f) {
                return Err(Error::invalid(format!(
                    "stage {i} features {:?} do not match expected [{c}, {}, {}]",
                    t.shape(),
                    h / f,
                    w / f
                )));
            }
        }
        Ok(())
    }

    pub fn forward<S: Scalar>(&self, p: &ParamSet<S>, image: &Tensor<S>) -> (FeaturePyramid<S>, EncoderCache<S>) {
        let (stem, stem_cache) = self.stem.forward(p, image);
        let mut x = stem.clone();
        let mut feats = Vec::with_capacity(self.stages.len());
        let mut caches = Vec::with_capacity(self.stages.len());
        for (down, refine) in &self.stages {
            let (d, dc) = down.forward(p, &x);
            let (r, rc) = refine.forward(p, &d);
            caches.push((dc, rc));
            feats.push(r.clone());
            x = r;
        }
        (
            FeaturePyramid {
                stem,
                stages: feats,
                scales: self.config.scales(),
            },
            EncoderCache {
                stem: stem_cache,
                stages: caches,
            },
        )
    }

    pub fn infer<S: Scalar>(&self, p: &ParamSet<S>, image: &Tensor<S>) -> FeaturePyramid<S> {
        let stem = self.stem.infer(p, image);
        let mut feats: Vec<Tensor<S>> = Vec::with_capacity(self.stages.len());
        for (down, refine) in &self.stages {
            let x = feats.last().unwrap_or(&stem);
            let d = down.infer(p, x);
            feats.push(refine.infer(p, &d));
        }
        FeaturePyramid {
            stem,
            stages: feats,
            scales: self.config.scales(),
        }
    }

    /// Consumes the gradient w.r.t. every pyramid level. The image gradient
    /// is not needed and is dropped.
    pub fn backward<S: Scalar>(&self, p: &ParamSet<S>, grads: &mut Grads<S>, cache: &EncoderCache<S>, g: FeaturePyramid<S>) {
        let FeaturePyramid { mut stem, stages, .. } = g;
        let mut carry: Option<Tensor<S>> = None;
        for (i, mut g_out) in stages.into_iter().enumerate().rev() {
            if let Some(c) = carry.take() {
                g_out.add_assign(&c);
            }
            let (down, refine) = &self.stages[i];
            let (dc, rc) = &cache.stages[i];
            let g_d = refine.backward(p, grads, rc, &g_out);
            carry = Some(down.backward(p, grads, dc, &g_d));
        }
        if let Some(c) = carry {
            stem.add_assign(&c);
        }
        self.stem.backward(p, grads, &cache.stem, &stem);
    }
}
