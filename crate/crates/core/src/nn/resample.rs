use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Nearest-neighbour upsampling by an integer `factor`.
pub fn upsample_nearest<S: Scalar>(x: &Tensor<S>, factor: usize) -> Tensor<S> {
    let (c, h, w) = x.chw();
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..oh {
            let srow = &src[ch * h * w + (y / factor) * w..][..w];
            let drow = &mut dst[ch * oh * ow + y * ow..][..ow];
            for (xo, d) in drow.iter_mut().enumerate() {
                *d = srow[xo / factor];
            }
        }
    }
    out
}

pub fn upsample_nearest_backward<S: Scalar>(grad_out: &Tensor<S>, factor: usize) -> Tensor<S> {
    let (c, oh, ow) = grad_out.chw();
    let (h, w) = (oh / factor, ow / factor);
    let mut g = Tensor::zeros(&[c, h, w]);
    let src = grad_out.data();
    let dst = g.data_mut();
    for ch in 0..c {
        for y in 0..oh {
            let srow = &src[ch * oh * ow + y * ow..][..ow];
            let drow = &mut dst[ch * h * w + (y / factor) * w..][..w];
            for (xo, &s) in srow.iter().enumerate() {
                drow[xo / factor] += s;
            }
        }
    }
    g
}
