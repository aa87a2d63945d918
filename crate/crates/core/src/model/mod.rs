//! The two-branch network: a shared multi-scale encoder feeding a mean
//! decoder/head and a variance decoder/head with disjoint parameters.

mod archive;
mod decoder;
mod encoder;
mod sampling;

pub use archive::{read_archive, write_archive, Archive};
pub use decoder::{Decoder, DecoderCache};
pub use encoder::{ConvEncoder, EncoderCache, EncoderConfig, FeaturePyramid};
pub use sampling::{pre_sigmoid_sample, sample_backward, sample_prediction, std_from_var, SIGMA_EPS};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nn::{Conv2d, Grads, ParamId, ParamSet};
use crate::scalar::{sigmoid, softplus, softplus_inverse, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// Feed every deeper encoder stage into each decoder level (nested skips).
    #[serde(default)]
    pub dense_skips: bool,
    /// Seed for parameter initialization.
    #[serde(default)]
    pub seed: u64,
    /// Initial variance output (softplus of the head bias).
    #[serde(default = "default_variance_init")]
    pub variance_init: f64,
}

fn default_variance_init() -> f64 {
    0.05
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            dense_skips: false,
            seed: 0,
            variance_init: default_variance_init(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(self.variance_init > 0.0 && self.variance_init.is_finite()) {
            return Err(Error::invalid("variance_init must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel Gaussian over logits: mean `mu` and variance `var >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPrediction<S> {
    pub mu: Grid<S>,
    pub var: Grid<S>,
}

impl<S: Scalar> DistributionPrediction<S> {
    pub fn new(mu: Grid<S>, var: Grid<S>) -> Result<Self> {
        mu.check_dims(&var, "mean vs variance")?;
        if var.as_slice().iter().any(|&v| v < S::zero() || v.is_nan()) {
            return Err(Error::invalid("variance must be non-negative"));
        }
        Ok(Self { mu, var })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mu.dims()
    }
}

/// Which branches a training forward pass needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branches {
    Both,
    MeanOnly,
}

pub struct ForwardCache<S> {
    encoder: EncoderCache<S>,
    mean: DecoderCache<S>,
    mean_feat: Tensor<S>,
    var: Option<(DecoderCache<S>, Tensor<S>, Grid<S>)>,
}

/// The network and its parameters.
#[derive(Debug, Clone)]
pub struct Uaed<S> {
    config: ModelConfig,
    params: ParamSet<S>,
    encoder: ConvEncoder,
    mean_decoder: Decoder,
    var_decoder: Decoder,
    mean_head: Conv2d,
    var_head: Conv2d,
}

impl<S: Scalar> Uaed<S> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new(config.seed);
        let encoder = ConvEncoder::new(&mut params, "encoder", &config.encoder);
        let mean_decoder = Decoder::new(&mut params, "decoder_mean", &config.encoder, config.dense_skips);
        let var_decoder = Decoder::new(&mut params, "decoder_var", &config.encoder, config.dense_skips);
        let c0 = config.encoder.stem_channels;
        let mean_head = Conv2d::new(&mut params, "head_mean", c0, 1, 1, 1, true);
        let var_head = Conv2d::new(&mut params, "head_var", c0, 1, 1, 1, true);
        // small variance-head weights so the initial variance stays near variance_init
        params.get_mut(var_head.weight).scale(S::of(0.1));
        let b = softplus_inverse(config.variance_init);
        params.get_mut(var_head.bias.expect("bias")).fill(S::of(b));
        Ok(Self {
            config,
            params,
            encoder,
            mean_decoder,
            var_decoder,
            mean_head,
            var_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    pub fn encoder(&self) -> &ConvEncoder {
        &self.encoder
    }

    /// Parameters used only by the mean branch (decoder + head).
    pub fn mean_branch_params(&self) -> Vec<ParamId> {
        let mut ids = self.mean_decoder.param_ids();
        ids.extend(self.mean_head.param_ids());
        ids
    }

    /// Parameters used only by the variance branch (decoder + head).
    pub fn variance_branch_params(&self) -> Vec<ParamId> {
        let mut ids = self.var_decoder.param_ids();
        ids.extend(self.var_head.param_ids());
        ids
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.encoder.param_ids()
    }

    pub fn encode(&self, image: &Tensor<S>) -> Result<FeaturePyramid<S>> {
        self.encoder.check_input(image)?;
        Ok(self.encoder.infer(&self.params, image))
    }

    fn head_map(&self, head: &Conv2d, feat: &Tensor<S>) -> Grid<S> {
        let out = head.forward(&self.params, feat);
        out.channel_grid(0)
    }

    /// Full-resolution mean logits.
    pub fn decode_mean(&self, pyramid: &FeaturePyramid<S>) -> Result<Grid<S>> {
        self.encoder.check_pyramid(pyramid)?;
        let feat = self.mean_decoder.infer(&self.params, pyramid);
        Ok(self.head_map(&self.mean_head, &feat))
    }

    /// Full-resolution variance, `softplus` of the head output.
    pub fn decode_variance(&self, pyramid: &FeaturePyramid<S>) -> Result<Grid<S>> {
        self.encoder.check_pyramid(pyramid)?;
        let feat = self.var_decoder.infer(&self.params, pyramid);
        Ok(self.head_map(&self.var_head, &feat).map(|&z| softplus(z)))
    }

    pub fn predict_distribution(&self, image: &Tensor<S>) -> Result<DistributionPrediction<S>> {
        let pyr = self.encode(image)?;
        DistributionPrediction::new(self.decode_mean(&pyr)?, self.decode_variance(&pyr)?)
    }

    /// Forward pass keeping everything needed by [`Uaed::backward`]. With
    /// [`Branches::MeanOnly`] the variance map is all zeros.
    pub fn forward_train(&self, image: &Tensor<S>, branches: Branches) -> Result<(DistributionPrediction<S>, ForwardCache<S>)> {
        self.encoder.check_input(image)?;
        let p = &self.params;
        let (pyr, enc_cache) = self.encoder.forward(p, image);
        let (mean_feat, mean_cache) = self.mean_decoder.forward(p, &pyr);
        let mu = self.head_map(&self.mean_head, &mean_feat);
        let (var, var_cache) = match branches {
            Branches::Both => {
                let (vf, vc) = self.var_decoder.forward(p, &pyr);
                let z = self.head_map(&self.var_head, &vf);
                (z.map(|&v| softplus(v)), Some((vc, vf, z)))
            }
            Branches::MeanOnly => (Grid::filled(mu.height(), mu.width(), S::zero()), None),
        };
        Ok((
            DistributionPrediction { mu, var },
            ForwardCache {
                encoder: enc_cache,
                mean: mean_cache,
                mean_feat,
                var: var_cache,
            },
        ))
    }

    /// Back-propagate loss gradients w.r.t. the mean logits and the variance.
    pub fn backward(&self, cache: &ForwardCache<S>, d_mu: &Grid<S>, d_var: Option<&Grid<S>>, grads: &mut Grads<S>) {
        let p = &self.params;
        let (h, w) = d_mu.dims();
        let g_mu = Tensor::from_vec(&[1, h, w], d_mu.as_slice().to_vec()).expect("shape");
        let g_mean_feat = self.mean_head.backward(p, grads, &cache.mean_feat, &g_mu);
        let mut g_pyr = self.mean_decoder.backward(p, grads, &cache.mean, &g_mean_feat);
        if let (Some(dv), Some((vc, vf, z))) = (d_var, &cache.var) {
            let g_z: Vec<S> = dv
                .as_slice()
                .iter()
                .zip(z.as_slice())
                .map(|(&g, &zv)| g * sigmoid(zv))
                .collect();
            let g_z = Tensor::from_vec(&[1, h, w], g_z).expect("shape");
            let g_var_feat = self.var_head.backward(p, grads, vf, &g_z);
            let g2 = self.var_decoder.backward(p, grads, vc, &g_var_feat);
            g_pyr.add_assign(&g2);
        }
        self.encoder.backward(p, grads, &cache.encoder, g_pyr);
    }

    /// Named tensors in registration order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<S>)> {
        self.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    pub fn to_archive(&self) -> Archive<S> {
        Archive {
            header: serde_json::json!({ "kind": "model", "model_config": self.config }),
            tensors: self.named_tensors(),
        }
    }

    /// Rebuild from an archive holding a `model_config` header entry and
    /// every parameter tensor (extra tensors, e.g. optimizer state, are ignored).
    pub fn from_archive(archive: &Archive<S>) -> Result<Self> {
        let cfg = archive
            .header
            .get("model_config")
            .ok_or_else(|| Error::Checkpoint("header has no model_config".into()))?;
        let config: ModelConfig = serde_json::from_value(cfg.clone())?;
        let mut model = Self::new(config)?;
        let names: Vec<String> = model.params.names().to_vec();
        let mut named = Vec::with_capacity(names.len());
        for name in names {
            let t = archive
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            named.push(t.clone());
        }
        model.params.load_named(named).map_err(Error::Checkpoint)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_archive(path, &self.to_archive())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&read_archive(path)?)
    }
}

#[cfg(test)]
mod tests;
