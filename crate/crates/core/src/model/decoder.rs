use super::encoder::{EncoderConfig, FeaturePyramid};
use crate::nn::{upsample_nearest, upsample_nearest_backward, BlockCache, ConvBlock, Grads, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One decoder level: the running features are upsampled ×2, concatenated
/// with the encoder skip at that resolution (plus, with dense skips, every
/// deeper encoder stage upsampled to match) and fused by a conv block.
#[derive(Debug, Clone)]
struct Level {
    block: ConvBlock,
    /// Encoder stage used as the direct skip; `None` means the stem.
    skip: Option<usize>,
    /// Deeper encoder stages fed in as dense skips.
    dense: Vec<usize>,
}

/// UNet-style decoder producing full-resolution `stem_channels` features.
#[derive(Debug, Clone)]
pub struct Decoder {
    levels: Vec<Level>,
    scales: Vec<usize>,
}

pub struct DecoderCache<S> {
    levels: Vec<(BlockCache<S>, Vec<usize>)>,
}

impl Decoder {
    pub fn new<S: Scalar>(params: &mut ParamSet<S>, name: &str, config: &EncoderConfig, dense_skips: bool) -> Self {
        let n = config.n_stages();
        let ch = &config.stage_channels;
        let g = config.groups;
        let mut levels = Vec::new();
        let mut c_run = ch[n - 1];
        // stage levels n-2 .. 0, then the stem level
        for target in (0..n - 1).map(Some).rev().chain(std::iter::once(None)) {
            let (skip_c, out_c, first_dense) = match target {
                Some(l) => (ch[l], ch[l], l + 2),
                None => (config.stem_channels, config.stem_channels, 1),
            };
            let dense: Vec<usize> = if dense_skips { (first_dense..n).collect() } else { Vec::new() };
            let c_in = c_run + skip_c + dense.iter().map(|&j| ch[j]).sum::<usize>();
            let lname = match target {
                Some(l) => format!("{name}.level{}", l + 1),
                None => format!("{name}.level0"),
            };
            levels.push(Level {
                block: ConvBlock::new(params, &lname, c_in, out_c, 1, g),
                skip: target,
                dense,
            });
            c_run = out_c;
        }
        Self {
            levels,
            scales: config.scales(),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.levels.iter().flat_map(|l| l.block.param_ids()).collect()
    }

    /// Factor to bring stage `j` up to the resolution of `target`.
    fn factor(&self, j: usize, target: Option<usize>) -> usize {
        self.scales[j] / target.map_or(1, |t| self.scales[t])
    }

    fn level_input<S: Scalar>(&self, level: &Level, x: &Tensor<S>, pyr: &FeaturePyramid<S>) -> (Tensor<S>, Vec<usize>) {
        let up = upsample_nearest(x, 2);
        let skip = match level.skip {
            Some(l) => &pyr.stages[l],
            None => &pyr.stem,
        };
        let dense: Vec<Tensor<S>> = level
            .dense
            .iter()
            .map(|&j| upsample_nearest(&pyr.stages[j], self.factor(j, level.skip)))
            .collect();
        let mut parts: Vec<&Tensor<S>> = vec![&up, skip];
        parts.extend(dense.iter());
        let counts = parts.iter().map(|t| t.chw().0).collect();
        (Tensor::concat_channels(&parts), counts)
    }

    pub fn forward<S: Scalar>(&self, p: &ParamSet<S>, pyr: &FeaturePyramid<S>) -> (Tensor<S>, DecoderCache<S>) {
        let mut x = pyr.stages.last().expect("non-empty pyramid").clone();
        let mut caches = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let (input, counts) = self.level_input(level, &x, pyr);
            let (out, cache) = level.block.forward(p, &input);
            caches.push((cache, counts));
            x = out;
        }
        (x, DecoderCache { levels: caches })
    }

    pub fn infer<S: Scalar>(&self, p: &ParamSet<S>, pyr: &FeaturePyramid<S>) -> Tensor<S> {
        let mut x = pyr.stages.last().expect("non-empty pyramid").clone();
        for level in &self.levels {
            let (input, _) = self.level_input(level, &x, pyr);
            x = level.block.infer(p, &input);
        }
        x
    }

    /// Returns the gradient w.r.t. every pyramid level.
    pub fn backward<S: Scalar>(&self, p: &ParamSet<S>, grads: &mut Grads<S>, cache: &DecoderCache<S>, grad_out: &Tensor<S>) -> FeaturePyramid<S> {
        let n = self.scales.len();
        let mut g_stages: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut g_stem: Option<Tensor<S>> = None;
        let add = |slot: &mut Option<Tensor<S>>, t: Tensor<S>| match slot {
            Some(s) => s.add_assign(&t),
            None => *slot = Some(t),
        };
        let mut g = grad_out.clone();
        for (level, (bc, counts)) in self.levels.iter().zip(&cache.levels).rev() {
            let g_in = level.block.backward(p, grads, bc, &g);
            let mut parts = g_in.split_channels(counts).into_iter();
            let g_up = parts.next().expect("upsampled part");
            let g_skip = parts.next().expect("skip part");
            match level.skip {
                Some(l) => add(&mut g_stages[l], g_skip),
                None => add(&mut g_stem, g_skip),
            }
            for (&j, gd) in level.dense.iter().zip(parts) {
                add(&mut g_stages[j], upsample_nearest_backward(&gd, self.factor(j, level.skip)));
            }
            g = upsample_nearest_backward(&g_up, 2);
        }
        // what is left flows into the deepest stage
        add(&mut g_stages[n - 1], g);
        FeaturePyramid {
            stem: g_stem.expect("stem level"),
            stages: g_stages.into_iter().map(|t| t.expect("every stage receives a gradient")).collect(),
            scales: self.scales.clone(),
        }
    }
}
