use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Tensor;

/// SiLU / swish: `x · sigmoid(x)`.
#[inline]
pub fn silu<S: Scalar>(x: S) -> S {
    x * sigmoid(x)
}

pub fn silu_backward<S: Scalar>(pre: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(pre.data()) {
        let s = sigmoid(x);
        *gv *= s * (S::one() + x * (S::one() - s));
    }
    g
}
