use rayon::prelude::*;

use super::params::{Grads, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2-D convolution with "same" padding (`k / 2`) and an integer stride.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Output indices `o` in `0..n_out` whose source `o * stride + k - pad` lies in `0..n_in`.
#[inline]
fn valid_range(n_out: usize, n_in: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= n_in - 1
    let hi = if n_in + pad > k {
        ((n_in + pad - k - 1) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

impl Conv2d {
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Self {
        let weight = params.register_fan_in(
            &format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            c_in * kernel * kernel,
        );
        let bias = bias.then(|| params.register_const(&format!("{name}.bias"), &[c_out], 0.0));
        Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.weight];
        ids.extend(self.bias);
        ids
    }

    /// Unfold `x` into `[c_in·k·k, oh·ow]` patch columns (zero padded).
    fn im2col<S: Scalar>(&self, x: &Tensor<S>, oh: usize, ow: usize) -> Vec<S> {
        let (c_in, h, w) = x.chw();
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        let src = x.data();
        let mut cols = vec![S::zero(); c_in * k * k * oh * ow];
        cols.par_chunks_mut(k * k * oh * ow).enumerate().for_each(|(i, block)| {
            let plane = &src[i * h * w..(i + 1) * h * w];
            for ky in 0..k {
                let (y0, y1) = valid_range(oh, h, ky, pad, s);
                for kx in 0..k {
                    let (x0, x1) = valid_range(ow, w, kx, pad, s);
                    let row = &mut block[(ky * k + kx) * oh * ow..(ky * k + kx + 1) * oh * ow];
                    for y in y0..y1 {
                        let iy = y * s + ky - pad;
                        let srow = &plane[iy * w..(iy + 1) * w];
                        let drow = &mut row[y * ow..(y + 1) * ow];
                        if s == 1 {
                            let off = x0 + kx - pad;
                            drow[x0..x1].copy_from_slice(&srow[off..off + x1 - x0]);
                        } else {
                            for xo in x0..x1 {
                                drow[xo] = srow[xo * s + kx - pad];
                            }
                        }
                    }
                }
            }
        });
        cols
    }

    /// Adjoint of [`Conv2d::im2col`]: scatter-add columns back into an image.
    fn col2im<S: Scalar>(&self, cols: &[S], c_in: usize, h: usize, w: usize, oh: usize, ow: usize) -> Tensor<S> {
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        let mut out = Tensor::zeros(&[c_in, h, w]);
        out.data_mut().par_chunks_mut(h * w).enumerate().for_each(|(i, plane)| {
            let block = &cols[i * k * k * oh * ow..(i + 1) * k * k * oh * ow];
            for ky in 0..k {
                let (y0, y1) = valid_range(oh, h, ky, pad, s);
                for kx in 0..k {
                    let (x0, x1) = valid_range(ow, w, kx, pad, s);
                    let row = &block[(ky * k + kx) * oh * ow..(ky * k + kx + 1) * oh * ow];
                    for y in y0..y1 {
                        let iy = y * s + ky - pad;
                        let drow = &mut plane[iy * w..(iy + 1) * w];
                        let srow = &row[y * ow..(y + 1) * ow];
                        if s == 1 {
                            let off = x0 + kx - pad;
                            for (d, &v) in drow[off..off + x1 - x0].iter_mut().zip(&srow[x0..x1]) {
                                *d += v;
                            }
                        } else {
                            for xo in x0..x1 {
                                drow[xo * s + kx - pad] += srow[xo];
                            }
                        }
                    }
                }
            }
        });
        out
    }

    pub fn forward<S: Scalar>(&self, p: &ParamSet<S>, x: &Tensor<S>) -> Tensor<S> {
        let (c_in, h, w) = x.chw();
        assert_eq!(c_in, self.c_in, "conv input channels");
        let (oh, ow) = self.out_dims(h, w);
        let ckk = c_in * self.kernel * self.kernel;
        let cols = self.im2col(x, oh, ow);
        let mut out = Tensor::zeros(&[self.c_out, oh, ow]);
        if let Some(b) = self.bias {
            let b = p.get(b).data();
            for (o, dst) in out.data_mut().chunks_mut(oh * ow).enumerate() {
                dst.iter_mut().for_each(|v| *v = b[o]);
            }
        }
        S::matmul(self.c_out, ckk, oh * ow, p.get(self.weight).data(), false, &cols, false, out.data_mut(), true);
        out
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward<S: Scalar>(&self, p: &ParamSet<S>, grads: &mut Grads<S>, input: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
        let (c_in, h, w) = input.chw();
        let (c_out, oh, ow) = grad_out.chw();
        let ckk = c_in * self.kernel * self.kernel;
        let npix = oh * ow;
        let cols = self.im2col(input, oh, ow);
        let g = grad_out.data();
        S::matmul(c_out, npix, ckk, g, false, &cols, true, grads.get_mut(self.weight).data_mut(), true);
        if let Some(bid) = self.bias {
            let gb = grads.get_mut(bid).data_mut();
            for o in 0..c_out {
                gb[o] += g[o * npix..(o + 1) * npix].iter().copied().sum::<S>();
            }
        }
        let mut gcols = vec![S::zero(); ckk * npix];
        S::matmul(ckk, c_out, npix, p.get(self.weight).data(), true, g, false, &mut gcols, false);
        self.col2im(&gcols, c_in, h, w, oh, ow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition with explicit bounds checks, independent of the fast path.
    fn naive(conv: &Conv2d, p: &ParamSet<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (c_in, h, w) = x.chw();
        let (oh, ow) = conv.out_dims(h, w);
        let k = conv.kernel as isize;
        let pad = k / 2;
        let wt = p.get(conv.weight).data();
        let mut out = Tensor::zeros(&[conv.c_out, oh, ow]);
        for o in 0..conv.c_out {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = conv.bias.map(|b| p.get(b).data()[o]).unwrap_or(0.0);
                    for i in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * conv.stride) as isize + ky - pad;
                                let ix = (xo * conv.stride) as isize + kx - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let wi = ((o * c_in + i) * conv.kernel + ky as usize)
                                    * conv.kernel
                                    + kx as usize;
                                acc += wt[wi] * x.data()[(i * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out.data_mut()[(o * oh + y) * ow + xo] = acc;
                }
            }
        }
        out
    }

    fn input(c: usize, h: usize, w: usize) -> Tensor<f64> {
        let data = (0..c * h * w)
            .map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0)
            .collect();
        Tensor::from_vec(&[c, h, w], data).unwrap()
    }

    #[test]
    fn forward_matches_naive_for_all_strides() {
        for &(k, s, h, w) in &[(3, 1, 5, 7), (3, 2, 6, 8), (3, 2, 5, 7), (1, 1, 4, 3)] {
            let mut p = ParamSet::<f64>::new(3);
            let conv = Conv2d::new(&mut p, "c", 2, 3, k, s, true);
            p.get_mut(conv.bias.unwrap()).data_mut()[1] = 0.5;
            let x = input(2, h, w);
            let fast = conv.forward(&p, &x);
            let slow = naive(&conv, &p, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "k={k} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for &s in &[1usize, 2] {
            let mut p = ParamSet::<f64>::new(5);
            let conv = Conv2d::new(&mut p, "c", 2, 2, 3, s, true);
            let x = input(2, 6, 5);
            let out = conv.forward(&p, &x);
            // loss = sum(out * r) with a fixed pattern r
            let r: Vec<f64> = (0..out.len()).map(|i| (i % 5) as f64 - 2.0).collect();
            let gout = Tensor::from_vec(out.shape(), r.clone()).unwrap();
            let mut grads = p.zero_grads();
            let gin = conv.backward(&p, &mut grads, &x, &gout);
            let loss = |p: &ParamSet<f64>, x: &Tensor<f64>| -> f64 {
                conv.forward(p, x).data().iter().zip(&r).map(|(a, b)| a * b).sum()
            };
            let h = 1e-6;
            for idx in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[idx] += h;
                let mut xm = x.clone();
                xm.data_mut()[idx] -= h;
                let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
                assert!((fd - gin.data()[idx]).abs() < 1e-6);
            }
            for id in conv.param_ids() {
                for idx in 0..p.get(id).len() {
                    let mut pp = p.clone();
                    pp.get_mut(id).data_mut()[idx] += h;
                    let mut pm = p.clone();
                    pm.get_mut(id).data_mut()[idx] -= h;
                    let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h);
                    assert!((fd - grads.get(id).data()[idx]).abs() < 1e-6);
                }
            }
        }
    }
}
