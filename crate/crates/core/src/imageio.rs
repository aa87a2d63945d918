//! PNG helpers. Binary maps are stored as 8-bit grayscale 0/255, probability
//! maps as 8- or 16-bit grayscale scaled linearly onto `[0, 1]`, and images as
//! 8-bit RGB.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, Grid};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn img_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| img_err(path, e))
}

fn save_png<P, C>(path: &Path, img: &ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| img_err(path, e))
}

/// Reads a single-channel PNG and binarizes at half range.
pub fn read_binary(path: &Path) -> Result<BinaryMap> {
    let img = open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| u8::from(p.0[0] >= 32768)).collect();
    Grid::from_vec(h as usize, w as usize, data)
}

pub fn write_binary(path: &Path, map: &BinaryMap) -> Result<()> {
    let (h, w) = map.dims();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if map.at(y as usize, x as usize) != 0 { 255 } else { 0 }])
    });
    save_png(path, &img)
}

/// Reads an RGB PNG into a `[3, h, w]` tensor with values in `[0, 1]`.
pub fn read_rgb<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![S::zero(); 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = S::of(p.0[c] as f64 / 255.0);
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

pub fn write_rgb<S: Scalar>(path: &Path, image: &Tensor<S>) -> Result<()> {
    let (c, h, w) = image.chw();
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {c}")));
    }
    let d = image.data();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| {
            let v = d[(ch * h + y as usize) * w + x as usize].as_f64();
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    });
    save_png(path, &img)
}

/// Reads an 8- or 16-bit grayscale PNG as values in `[0, 1]`
/// (`v / 255` or `v / 65535`).
pub fn read_prob(path: &Path) -> Result<Grid<f64>> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => return Err(img_err(path, format!("expected grayscale PNG, got {:?}", other.color()))),
    };
    Grid::from_vec(h, w, data)
}

/// Writes `values / full_scale` (clamped to `[0, 1]`) as a 16-bit PNG.
pub fn write_gray16(path: &Path, values: &Grid<f64>, full_scale: f64) -> Result<()> {
    let (h, w) = values.dims();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = values.at(y as usize, x as usize) / full_scale;
        Luma([(v.clamp(0.0, 1.0) * 65535.0).round() as u16])
    });
    save_png(path, &img)
}

pub fn write_rgb8(path: &Path, img: &RgbImage) -> Result<()> {
    save_png(path, img)
}
