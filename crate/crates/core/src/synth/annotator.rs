use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::raster::{edges_from_ids, rasterize_ids};
use super::{Scene, SECTORS};
use crate::error::{Error, Result};
use crate::grid::BinaryMap;

/// How one simulated annotator deviates from the ideal edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorProfile {
    /// Std (pixels) of contour-vertex displacement.
    pub jitter_px: f64,
    /// Probability that a contour segment (one angular sector of a shape) is omitted.
    pub drop_rate: f64,
    /// Probability of tracing each fine (low-contrast) shape.
    pub granularity: f64,
}

impl AnnotatorProfile {
    pub const EXACT: AnnotatorProfile = AnnotatorProfile {
        jitter_px: 0.0,
        drop_rate: 0.0,
        granularity: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) {
            return Err(Error::invalid(format!("jitter_px {} must be >= 0", self.jitter_px)));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::invalid(format!("drop_rate {} outside [0, 1]", self.drop_rate)));
        }
        if !(self.granularity >= 0.0) {
            return Err(Error::invalid(format!("granularity {} must be >= 0", self.granularity)));
        }
        Ok(())
    }
}

/// Per-vertex Gaussian displacements. Dense contours (ellipses) get noise
/// smoothed along the contour so neighbouring vertices move together.
fn jitter_vertices<R: Rng + ?Sized>(verts: &[(f64, f64)], std: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let n = verts.len();
    let mut noise: Vec<(f64, f64)> = (0..n)
        .map(|_| (StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
        .collect();
    if n >= 8 {
        const HALF: usize = 2;
        let norm = ((2 * HALF + 1) as f64).sqrt();
        noise = (0..n)
            .map(|i| {
                let (mut sx, mut sy) = (0.0, 0.0);
                for d in 0..=2 * HALF {
                    let (nx, ny) = noise[(i + n + d - HALF) % n];
                    sx += nx;
                    sy += ny;
                }
                (sx / norm, sy / norm)
            })
            .collect();
    }
    verts
        .iter()
        .zip(noise)
        .map(|(&(x, y), (nx, ny))| (x + std * nx, y + std * ny))
        .collect()
}

/// Trace the scene as one annotator would: include each fine shape with
/// probability `granularity`, jitter contour vertices, rasterize, then drop
/// whole contour segments with probability `drop_rate`.
///
/// The exact profile reproduces `scene.ideal_edges`.
pub fn simulate_annotator<R: Rng + ?Sized>(scene: &Scene, profile: &AnnotatorProfile, rng: &mut R) -> Result<BinaryMap> {
    profile.validate()?;
    let include_p = profile.granularity.min(1.0);
    let order: Vec<usize> = (0..scene.shapes.len())
        .filter(|&i| !scene.shapes[i].fine || (include_p > 0.0 && rng.random_bool(include_p)))
        .collect();
    let jittered: Vec<Vec<(f64, f64)>> = scene
        .shapes
        .iter()
        .map(|s| {
            if profile.jitter_px > 0.0 {
                jitter_vertices(&s.vertices, profile.jitter_px, rng)
            } else {
                s.vertices.clone()
            }
        })
        .collect();
    let verts: Vec<&[(f64, f64)]> = jittered.iter().map(Vec::as_slice).collect();
    let ids = rasterize_ids(scene.height, scene.width, &verts, &order);
    let mut edges = edges_from_ids(&ids);
    if profile.drop_rate > 0.0 {
        let dropped: Vec<[bool; SECTORS]> = scene
            .shapes
            .iter()
            .map(|_| std::array::from_fn(|_| rng.random_bool(profile.drop_rate)))
            .collect();
        for y in 0..scene.height {
            for x in 0..scene.width {
                if edges.at(y, x) == 0 {
                    continue;
                }
                let id = ids.at(y, x);
                let shape = &scene.shapes[id];
                if dropped[id][shape.sector(x as f64 + 0.5, y as f64 + 0.5)] {
                    *edges.get_mut(y, x) = 0;
                }
            }
        }
    }
    Ok(edges)
}
