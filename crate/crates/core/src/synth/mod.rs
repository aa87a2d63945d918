//! Deterministic synthetic scenes with simulated multi-annotator edge labels.
//!
//! A scene is a stack of filled shapes (star-shaped polygons and ellipses)
//! over a flat background. "Major" shapes have clear contrast and define the
//! ideal edge map; "fine" shapes are low-contrast detail drawn underneath the
//! major ones, which only some annotators bother to trace.

mod annotator;
mod dataset;
mod raster;

pub use annotator::{simulate_annotator, AnnotatorProfile};
pub use dataset::{default_profiles, generate_dataset, generate_samples, SynthConfig};
pub use raster::{chebyshev_distance_transform, edges_from_ids, rasterize_ids, BACKGROUND};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, Grid};
use crate::tensor::Tensor;

/// Number of angular sectors a contour is split into for segment dropping.
pub const SECTORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Polygon,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_shapes: usize,
    #[serde(default)]
    pub n_fine_shapes: usize,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ShapeKind>,
    /// Colour offset range of major shapes against the background.
    #[serde(default = "default_contrast")]
    pub contrast: (f64, f64),
    #[serde(default = "default_fine_contrast")]
    pub fine_contrast: (f64, f64),
    /// Shape radius range as a fraction of `min(height, width)`.
    #[serde(default = "default_size")]
    pub size: (f64, f64),
    #[serde(default = "default_fine_size")]
    pub fine_size: (f64, f64),
    /// Std of additive Gaussian pixel noise.
    #[serde(default)]
    pub noise_std: f64,
}

fn default_kinds() -> Vec<ShapeKind> {
    vec![ShapeKind::Polygon, ShapeKind::Ellipse]
}
fn default_contrast() -> (f64, f64) {
    (0.2, 0.45)
}
fn default_fine_contrast() -> (f64, f64) {
    (0.06, 0.14)
}
fn default_size() -> (f64, f64) {
    (0.12, 0.3)
}
fn default_fine_size() -> (f64, f64) {
    (0.05, 0.12)
}

impl SceneSpec {
    pub fn new(seed: u64, height: usize, width: usize, n_shapes: usize) -> Self {
        Self {
            seed,
            height,
            width,
            n_shapes,
            n_fine_shapes: 0,
            kinds: default_kinds(),
            contrast: default_contrast(),
            fine_contrast: default_fine_contrast(),
            size: default_size(),
            fine_size: default_fine_size(),
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("zero-area canvas"));
        }
        if self.kinds.is_empty() && self.n_shapes + self.n_fine_shapes > 0 {
            return Err(Error::invalid("no shape kinds enabled"));
        }
        let ordered = |(a, b): (f64, f64), name: &str| {
            if a.is_finite() && b.is_finite() && 0.0 <= a && a <= b {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} range ({a}, {b}) is not ordered and non-negative")))
            }
        };
        ordered(self.contrast, "contrast")?;
        ordered(self.fine_contrast, "fine_contrast")?;
        ordered(self.size, "size")?;
        ordered(self.fine_size, "fine_size")?;
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// A filled closed contour. Ellipses are stored as dense polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    /// `(x, y)` in pixel coordinates; pixel `(r, c)` has its centre at `(c + 0.5, r + 0.5)`.
    pub vertices: Vec<(f64, f64)>,
    pub center: (f64, f64),
    pub color: [f64; 3],
    pub fine: bool,
}

impl Shape {
    /// Axis-aligned rectangle covering the pixel centres in `[x0, x1) × [y0, y1)`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, color: [f64; 3]) -> Self {
        Self {
            kind: ShapeKind::Polygon,
            vertices: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)],
            center: ((x0 + x1) / 2.0, (y0 + y1) / 2.0),
            color,
            fine: false,
        }
    }

    /// Angular sector of point `(x, y)` around the shape centre.
    pub fn sector(&self, x: f64, y: f64) -> usize {
        let a = (y - self.center.1).atan2(x - self.center.0) + std::f64::consts::PI;
        ((a / (2.0 * std::f64::consts::PI) * SECTORS as f64) as usize).min(SECTORS - 1)
    }
}

/// A rendered scene with its geometry, kept so annotators can re-trace it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub background: [f64; 3],
    /// Bottom to top: fine shapes first, then major shapes.
    pub shapes: Vec<Shape>,
    /// `[3, h, w]`, values in `[0, 1]`.
    pub image: Tensor<f64>,
    pub ideal_edges: BinaryMap,
}

impl Scene {
    /// Render an explicit list of shapes (bottom to top) without noise.
    pub fn from_shapes(height: usize, width: usize, background: [f64; 3], shapes: Vec<Shape>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("zero-area canvas"));
        }
        let all: Vec<usize> = (0..shapes.len()).collect();
        let verts: Vec<&[(f64, f64)]> = shapes.iter().map(|s| s.vertices.as_slice()).collect();
        let ids = rasterize_ids(height, width, &verts, &all);
        let image = paint(&ids, &shapes, background);
        let majors: Vec<usize> = (0..shapes.len()).filter(|&i| !shapes[i].fine).collect();
        let major_ids = rasterize_ids(height, width, &verts, &majors);
        let ideal_edges = edges_from_ids(&major_ids);
        Ok(Self {
            height,
            width,
            background,
            shapes,
            image,
            ideal_edges,
        })
    }
}

fn paint(ids: &Grid<usize>, shapes: &[Shape], background: [f64; 3]) -> Tensor<f64> {
    let (h, w) = ids.dims();
    let mut img = Tensor::zeros(&[3, h, w]);
    let d = img.data_mut();
    for y in 0..h {
        for x in 0..w {
            let id = ids.at(y, x);
            let color = if id == BACKGROUND { background } else { shapes[id].color };
            for c in 0..3 {
                d[(c * h + y) * w + x] = color[c];
            }
        }
    }
    img
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_shape(rng: &mut ChaCha8Rng, spec: &SceneSpec, background: [f64; 3], fine: bool) -> Shape {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let kind = spec.kinds[rng.random_range(0..spec.kinds.len())];
    let scale = h.min(w);
    let r = uniform(rng, if fine { spec.fine_size } else { spec.size }) * scale;
    let cx = rng.random_range(0.0..w);
    let cy = rng.random_range(0.0..h);
    let vertices = match kind {
        ShapeKind::Polygon => {
            let n = rng.random_range(3..=6usize);
            let mut angles: Vec<f64> = (0..n)
                .map(|i| (i as f64 + rng.random_range(0.15..0.85)) * std::f64::consts::TAU / n as f64)
                .collect();
            angles.sort_by(f64::total_cmp);
            angles
                .into_iter()
                .map(|a| {
                    let rr = r * rng.random_range(0.7..1.0);
                    (cx + rr * a.cos(), cy + rr * a.sin())
                })
                .collect()
        }
        ShapeKind::Ellipse => {
            let ry = r * rng.random_range(0.5..1.0);
            let rot = rng.random_range(0.0..std::f64::consts::PI);
            let (s, c) = rot.sin_cos();
            (0..32)
                .map(|i| {
                    let t = i as f64 * std::f64::consts::TAU / 32.0;
                    let (ex, ey) = (r * t.cos(), ry * t.sin());
                    (cx + ex * c - ey * s, cy + ex * s + ey * c)
                })
                .collect()
        }
    };
    let contrast = uniform(rng, if fine { spec.fine_contrast } else { spec.contrast });
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut color = background;
    for (c, bg) in color.iter_mut().zip(background) {
        let jitter = rng.random_range(0.7..1.3);
        *c = (bg + sign * contrast * jitter).clamp(0.0, 1.0);
    }
    Shape {
        kind,
        vertices,
        center: (cx, cy),
        color,
        fine,
    }
}

/// Render a random scene; a pure function of `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = [
        rng.random_range(0.3..0.7),
        rng.random_range(0.3..0.7),
        rng.random_range(0.3..0.7),
    ];
    let mut shapes = Vec::with_capacity(spec.n_shapes + spec.n_fine_shapes);
    for _ in 0..spec.n_fine_shapes {
        shapes.push(random_shape(&mut rng, spec, background, true));
    }
    for _ in 0..spec.n_shapes {
        shapes.push(random_shape(&mut rng, spec, background, false));
    }
    let mut scene = Scene::from_shapes(spec.height, spec.width, background, shapes)?;
    if spec.noise_std > 0.0 {
        for v in scene.image.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + spec.noise_std * z).clamp(0.0, 1.0);
        }
    }
    Ok(scene)
}
