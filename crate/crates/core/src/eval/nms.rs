//! Edge thinning: orientation-aware non-maximum suppression on probability
//! maps and Zhang-Suen thinning for binary maps.

use crate::grid::{BinaryMap, Grid};

/// Gaussian width of the copy used to estimate orientation.
pub const ORIENT_SIGMA: f64 = 1.5;
/// A pixel survives against neighbours up to 1% stronger, so plateaus keep a
/// ridge instead of vanishing.
pub const TIE_MARGIN: f64 = 1.01;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(g: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = g.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let rows: Grid<f64> = Grid::from_fn(h, w, |y, x| {
        k.iter()
            .enumerate()
            .map(|(i, &kv)| kv * g.at(y, clamp(x as isize + i as isize - r, w)))
            .sum()
    });
    Grid::from_fn(h, w, |y, x| {
        k.iter()
            .enumerate()
            .map(|(i, &kv)| kv * rows.at(clamp(y as isize + i as isize - r, h), x))
            .sum()
    })
}

/// Central differences inside, one-sided at the borders: `(d/dx, d/dy)`.
fn gradient(g: &Grid<f64>) -> (Grid<f64>, Grid<f64>) {
    let (h, w) = g.dims();
    let diff = |a: f64, b: f64, span: usize| if span == 0 { 0.0 } else { (a - b) / span as f64 };
    let gx = Grid::from_fn(h, w, |y, x| {
        let (lo, hi) = (x.saturating_sub(1), (x + 1).min(w - 1));
        diff(g.at(y, hi), g.at(y, lo), hi - lo)
    });
    let gy = Grid::from_fn(h, w, |y, x| {
        let (lo, hi) = (y.saturating_sub(1), (y + 1).min(h - 1));
        diff(g.at(hi, x), g.at(lo, x), hi - lo)
    });
    (gx, gy)
}

/// Direction normal to the edge through each pixel, in `[0, π)`, from the
/// second derivatives of a smoothed copy.
pub fn edge_normals(prob: &Grid<f64>) -> Grid<f64> {
    let smooth = gaussian_blur(prob, ORIENT_SIGMA);
    let (ox, oy) = gradient(&smooth);
    let (oxx, _) = gradient(&ox);
    let (oxy, oyy) = gradient(&oy);
    Grid::from_fn(prob.height(), prob.width(), |y, x| {
        let sign = if -oxy.at(y, x) >= 0.0 { 1.0 } else { -1.0 };
        let o = (oyy.at(y, x) * sign / (oxx.at(y, x) + 1e-5)).atan();
        o.rem_euclid(std::f64::consts::PI)
    })
}

fn interp(g: &Grid<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = g.dims();
    let x = x.clamp(0.0, w as f64 - 1.001).max(0.0);
    let y = y.clamp(0.0, h as f64 - 1.001).max(0.0);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (dx, dy) = (x - x0 as f64, y - y0 as f64);
    g.at(y0, x0) * (1.0 - dx) * (1.0 - dy)
        + g.at(y0, x1) * dx * (1.0 - dy)
        + g.at(y1, x0) * (1.0 - dx) * dy
        + g.at(y1, x1) * dx * dy
}

fn nms_pass(prob: &Grid<f64>) -> Grid<f64> {
    let normals = edge_normals(prob);
    Grid::from_fn(prob.height(), prob.width(), |y, x| {
        let e = prob.at(y, x);
        if e <= 0.0 {
            return 0.0;
        }
        let (s, c) = normals.at(y, x).sin_cos();
        let m = e * TIE_MARGIN;
        let (xf, yf) = (x as f64, y as f64);
        if m < interp(prob, xf + c, yf + s) || m < interp(prob, xf - c, yf - s) {
            0.0
        } else {
            e
        }
    })
}

/// Suppress every pixel that is not a local maximum across the edge.
///
/// Passes repeat until the support stops changing, so the result is a
/// fixed point: thinning it again changes nothing. Surviving values are
/// copied unchanged.
pub fn nms_thin(prob: &Grid<f64>) -> Grid<f64> {
    let mut cur = prob.map(|&v| v.max(0.0));
    loop {
        let next = nms_pass(&cur);
        let stable = next
            .as_slice()
            .iter()
            .zip(cur.as_slice())
            .all(|(a, b)| (*a > 0.0) == (*b > 0.0));
        if stable {
            return next;
        }
        cur = next;
    }
}

/// Zhang-Suen thinning of a binary map to 1-pixel-wide curves.
pub fn thin_binary(map: &BinaryMap) -> BinaryMap {
    let (h, w) = map.dims();
    let mut g = map.map(|&v| u8::from(v != 0));
    let px = |g: &BinaryMap, y: isize, x: isize| -> u8 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0
        } else {
            g.at(y as usize, x as usize)
        }
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if g.at(y, x) == 0 {
                        continue;
                    }
                    let (yi, xi) = (y as isize, x as isize);
                    // P2..P9 clockwise from north
                    let n = [
                        px(&g, yi - 1, xi),
                        px(&g, yi - 1, xi + 1),
                        px(&g, yi, xi + 1),
                        px(&g, yi + 1, xi + 1),
                        px(&g, yi + 1, xi),
                        px(&g, yi + 1, xi - 1),
                        px(&g, yi, xi - 1),
                        px(&g, yi - 1, xi - 1),
                    ];
                    let b: u8 = n.iter().sum();
                    let a = (0..8).filter(|&i| n[i] == 0 && n[(i + 1) % 8] == 1).count();
                    let ok = if pass == 0 {
                        n[0] * n[2] * n[4] == 0 && n[2] * n[4] * n[6] == 0
                    } else {
                        n[0] * n[2] * n[6] == 0 && n[0] * n[4] * n[6] == 0
                    };
                    if (2..=6).contains(&b) && a == 1 && ok {
                        remove.push((y, x));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (y, x) in remove {
                *g.get_mut(y, x) = 0;
            }
        }
        if !changed {
            return g;
        }
    }
}
