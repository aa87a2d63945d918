//! Minimal convolutional building blocks with hand-written backward passes.
//!
//! Every layer exposes `forward` returning the output plus whatever it needs
//! to cache, and `backward` that consumes the upstream gradient, accumulates
//! parameter gradients into a [`Grads`] buffer and returns the input gradient.

mod act;
mod conv;
mod norm;
mod params;
mod resample;

pub use act::{silu, silu_backward};
pub use conv::Conv2d;
pub use norm::{GroupNorm, NormCache};
pub use params::{Grads, ParamId, ParamSet};
pub use resample::{upsample_nearest, upsample_nearest_backward};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// conv → group norm → SiLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub norm: GroupNorm,
}

pub struct BlockCache<S> {
    input: Tensor<S>,
    norm: NormCache<S>,
    pre_act: Tensor<S>,
}

impl ConvBlock {
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        groups: usize,
    ) -> Self {
        Self {
            conv: Conv2d::new(params, &format!("{name}.conv"), c_in, c_out, 3, stride, false),
            norm: GroupNorm::new(params, &format!("{name}.norm"), c_out, groups),
        }
    }

    pub fn forward<S: Scalar>(&self, p: &ParamSet<S>, x: &Tensor<S>) -> (Tensor<S>, BlockCache<S>) {
        let z = self.conv.forward(p, x);
        let (n, norm) = self.norm.forward(p, &z);
        let mut out = n.clone();
        out.data_mut().iter_mut().for_each(|v| *v = silu(*v));
        (
            out,
            BlockCache {
                input: x.clone(),
                norm,
                pre_act: n,
            },
        )
    }

    /// Forward without keeping a cache (inference).
    pub fn infer<S: Scalar>(&self, p: &ParamSet<S>, x: &Tensor<S>) -> Tensor<S> {
        let z = self.conv.forward(p, x);
        let mut n = self.norm.infer(p, &z);
        n.data_mut().iter_mut().for_each(|v| *v = silu(*v));
        n
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamSet<S>,
        grads: &mut Grads<S>,
        cache: &BlockCache<S>,
        grad_out: &Tensor<S>,
    ) -> Tensor<S> {
        let g_pre = silu_backward(&cache.pre_act, grad_out);
        let g_conv = self.norm.backward(p, grads, &cache.norm, &g_pre);
        self.conv.backward(p, grads, &cache.input, &g_conv)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.conv.param_ids();
        ids.extend(self.norm.param_ids());
        ids
    }
}
