use super::params::{Grads, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-5;

/// Group normalization with per-channel affine parameters. Statistics are
/// per sample, so training and inference behave identically.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub groups: usize,
}

pub struct NormCache<S> {
    xhat: Tensor<S>,
    inv_std: Vec<S>,
}

impl GroupNorm {
    pub fn new<S: Scalar>(params: &mut ParamSet<S>, name: &str, channels: usize, groups: usize) -> Self {
        assert!(groups > 0 && channels.is_multiple_of(groups), "{channels} channels / {groups} groups");
        Self {
            gamma: params.register_const(&format!("{name}.gamma"), &[channels], 1.0),
            beta: params.register_const(&format!("{name}.beta"), &[channels], 0.0),
            channels,
            groups,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }

    pub fn forward<S: Scalar>(&self, p: &ParamSet<S>, x: &Tensor<S>) -> (Tensor<S>, NormCache<S>) {
        let (c, h, w) = x.chw();
        assert_eq!(c, self.channels);
        let gamma = p.get(self.gamma).data();
        let beta = p.get(self.beta).data();
        let per = c / self.groups * h * w;
        let n = S::of(per as f64);
        let mut xhat = x.clone();
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let range = g * per..(g + 1) * per;
            let seg = &x.data()[range.clone()];
            let mean = seg.iter().copied().sum::<S>() / n;
            let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let is = S::one() / (var + S::of(NORM_EPS)).sqrt();
            inv_std.push(is);
            let xh = &mut xhat.data_mut()[range.clone()];
            for v in xh.iter_mut() {
                *v = (*v - mean) * is;
            }
            let o = &mut out.data_mut()[range];
            for (j, v) in o.iter_mut().enumerate() {
                let ch = g * (c / self.groups) + j / (h * w);
                *v = gamma[ch] * xh[j] + beta[ch];
            }
        }
        (out, NormCache { xhat, inv_std })
    }

    pub fn infer<S: Scalar>(&self, p: &ParamSet<S>, x: &Tensor<S>) -> Tensor<S> {
        self.forward(p, x).0
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamSet<S>,
        grads: &mut Grads<S>,
        cache: &NormCache<S>,
        grad_out: &Tensor<S>,
    ) -> Tensor<S> {
        let (c, h, w) = grad_out.chw();
        let hw = h * w;
        let gamma = p.get(self.gamma).data();
        let xhat = cache.xhat.data();
        let go = grad_out.data();
        {
            let gg = grads.get_mut(self.gamma).data_mut();
            for (ch, g) in gg.iter_mut().enumerate().take(c) {
                let r = ch * hw..(ch + 1) * hw;
                *g += go[r.clone()].iter().zip(&xhat[r]).map(|(&a, &b)| a * b).sum::<S>();
            }
        }
        {
            let gb = grads.get_mut(self.beta).data_mut();
            for ch in 0..c {
                gb[ch] += go[ch * hw..(ch + 1) * hw].iter().copied().sum::<S>();
            }
        }
        let per = c / self.groups * hw;
        let n = S::of(per as f64);
        let mut gin = Tensor::zeros(&[c, h, w]);
        let gi = gin.data_mut();
        for g in 0..self.groups {
            let base = g * per;
            let mut sum_d = S::zero();
            let mut sum_dx = S::zero();
            for j in 0..per {
                let ch = base / hw + j / hw;
                let d = go[base + j] * gamma[ch];
                sum_d += d;
                sum_dx += d * xhat[base + j];
            }
            let is = cache.inv_std[g];
            for j in 0..per {
                let ch = base / hw + j / hw;
                let d = go[base + j] * gamma[ch];
                gi[base + j] = is / n * (n * d - sum_d - xhat[base + j] * sum_dx);
            }
        }
        gin
    }
}
