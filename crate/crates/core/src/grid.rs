//! Dense row-major H×W maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major `h × w` map of `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    h: usize,
    w: usize,
    data: Vec<T>,
}

/// A binary map; every element is 0 or 1.
pub type BinaryMap = Grid<u8>;

impl<T: Clone> Grid<T> {
    pub fn filled(h: usize, w: usize, value: T) -> Self {
        Self {
            h,
            w,
            data: vec![value; h * w],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for a {h}x{w} grid",
                data.len()
            )));
        }
        Ok(Self { h, w, data })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Self { h, w, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
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
    pub fn get(&self, y: usize, x: usize) -> &T {
        &self.data[y * self.w + x]
    }

    #[inline]
    pub fn get_mut(&mut self, y: usize, x: usize) -> &mut T {
        &mut self.data[y * self.w + x]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.h == other.h && self.w == other.w
    }

    pub(crate) fn check_dims<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.h, self.w, other.h, other.w
            )))
        }
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn at(&self, y: usize, x: usize) -> T {
        self.data[y * self.w + x]
    }

    /// Crop the window with top-left `(y0, x0)` and size `h × w`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Grid<T> {
        assert!(y0 + h <= self.h && x0 + w <= self.w, "crop out of bounds");
        Grid::from_fn(h, w, |y, x| self.at(y0 + y, x0 + x))
    }

    pub fn flip_horizontal(&self) -> Grid<T> {
        Grid::from_fn(self.h, self.w, |y, x| self.at(y, self.w - 1 - x))
    }

    pub fn flip_vertical(&self) -> Grid<T> {
        Grid::from_fn(self.h, self.w, |y, x| self.at(self.h - 1 - y, x))
    }

    /// Rotate 90° counter-clockwise `quarter_turns` times.
    pub fn rot90(&self, quarter_turns: usize) -> Grid<T> {
        let mut g = self.clone();
        for _ in 0..quarter_turns % 4 {
            let (h, w) = (g.h, g.w);
            g = Grid::from_fn(w, h, |y, x| g.at(x, w - 1 - y));
        }
        g
    }
}

impl BinaryMap {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }
}
