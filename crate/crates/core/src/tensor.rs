//! Row-major n-dimensional tensors. Feature maps are `[channels, height, width]`,
//! convolution kernels `[out, in, kh, kw]`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Stack single-channel grids into a `[c, h, w]` tensor.
    pub fn from_channels(channels: &[Grid<S>]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("no channels"))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(channels.len() * h * w);
        for c in channels {
            first.check_dims(c, "channel stack")?;
            data.extend_from_slice(c.as_slice());
        }
        Ok(Self {
            shape: vec![channels.len(), h, w],
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// `(c, h, w)` of a rank-3 tensor.
    #[inline]
    pub fn chw(&self) -> (usize, usize, usize) {
        debug_assert_eq!(self.shape.len(), 3);
        (self.shape[0], self.shape[1], self.shape[2])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Channel `c` of a rank-3 tensor.
    pub fn channel(&self, c: usize) -> &[S] {
        let (_, h, w) = self.chw();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    pub fn channel_grid(&self, c: usize) -> Grid<S> {
        let (_, h, w) = self.chw();
        Grid::from_vec(h, w, self.channel(c).to_vec()).expect("channel size")
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: S) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }

    /// Concatenate rank-3 tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<S>]) -> Tensor<S> {
        let (_, h, w) = parts[0].chw();
        let mut c_total = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.chw();
            assert_eq!((ph, pw), (h, w), "concat spatial mismatch");
            c_total += c;
            data.extend_from_slice(&p.data);
        }
        Tensor {
            shape: vec![c_total, h, w],
            data,
        }
    }

    /// Inverse of [`Tensor::concat_channels`] given the channel counts.
    pub fn split_channels(&self, counts: &[usize]) -> Vec<Tensor<S>> {
        let (c, h, w) = self.chw();
        assert_eq!(counts.iter().sum::<usize>(), c);
        let mut out = Vec::with_capacity(counts.len());
        let mut offset = 0;
        for &n in counts {
            out.push(Tensor {
                shape: vec![n, h, w],
                data: self.data[offset * h * w..(offset + n) * h * w].to_vec(),
            });
            offset += n;
        }
        out
    }
}
