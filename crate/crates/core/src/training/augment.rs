//! Geometric augmentation applied identically to an image and all of its
//! annotations: random crop, horizontal/vertical flips, quarter turns.

use rand::Rng;

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One drawn augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub y0: usize,
    pub x0: usize,
    pub size: usize,
    pub flip_h: bool,
    pub flip_v: bool,
    pub quarter_turns: usize,
}

impl Augmentation {
    pub fn identity(size: usize) -> Self {
        Self {
            y0: 0,
            x0: 0,
            size,
            flip_h: false,
            flip_v: false,
            quarter_turns: 0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(h: usize, w: usize, size: usize, rng: &mut R) -> Result<Self> {
        if size == 0 || size > h || size > w {
            return Err(Error::invalid(format!("crop {size} does not fit a {h}x{w} image")));
        }
        Ok(Self {
            y0: rng.random_range(0..=h - size),
            x0: rng.random_range(0..=w - size),
            size,
            flip_h: rng.random_bool(0.5),
            flip_v: rng.random_bool(0.5),
            quarter_turns: rng.random_range(0..4),
        })
    }

    pub fn apply_grid<T: Copy>(&self, g: &Grid<T>) -> Grid<T> {
        let mut out = g.crop(self.y0, self.x0, self.size, self.size);
        if self.flip_h {
            out = out.flip_horizontal();
        }
        if self.flip_v {
            out = out.flip_vertical();
        }
        out.rot90(self.quarter_turns)
    }

    pub fn apply_image<S: Scalar>(&self, image: &Tensor<S>) -> Tensor<S> {
        let (c, _, _) = image.chw();
        let channels: Vec<Grid<S>> = (0..c).map(|i| self.apply_grid(&image.channel_grid(i))).collect();
        Tensor::from_channels(&channels).expect("channels share dims")
    }

    pub fn apply_annotations(&self, annotations: &AnnotationSet) -> AnnotationSet {
        annotations.map_each(|m| self.apply_grid(m))
    }
}
