use crate::grid::{BinaryMap, Grid};

/// Id of pixels not covered by any shape.
pub const BACKGROUND: usize = usize::MAX;

/// Paint shape ids by pixel-centre (midpoint) scanline fill. `order` lists
/// the shapes to draw, bottom to top; later entries occlude earlier ones.
pub fn rasterize_ids(h: usize, w: usize, shapes: &[&[(f64, f64)]], order: &[usize]) -> Grid<usize> {
    let mut ids = Grid::filled(h, w, BACKGROUND);
    let mut xs = Vec::new();
    for &id in order {
        let verts = shapes[id];
        let n = verts.len();
        if n < 3 {
            continue;
        }
        for row in 0..h {
            let yc = row as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let (x0, y0) = verts[i];
                let (x1, y1) = verts[(i + 1) % n];
                // half-open rule so shared vertices are counted once
                if (y0 <= yc) != (y1 <= yc) {
                    xs.push(x0 + (yc - y0) / (y1 - y0) * (x1 - x0));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                // pixel centres c + 0.5 in [pair[0], pair[1])
                let start = (pair[0] - 0.5).ceil().max(0.0);
                let end = (pair[1] - 0.5).ceil().min(w as f64);
                if end <= start {
                    continue;
                }
                for col in start as usize..end as usize {
                    *ids.get_mut(row, col) = id;
                }
            }
        }
    }
    ids
}

/// A pixel is an edge when a 4-neighbour belongs to a shape drawn below it
/// (or to the background). This marks the inner boundary of the occluding
/// shape, one pixel wide.
pub fn edges_from_ids(ids: &Grid<usize>) -> BinaryMap {
    let (h, w) = ids.dims();
    // background is below everything
    let z = |id: usize| if id == BACKGROUND { -1i64 } else { id as i64 };
    Grid::from_fn(h, w, |y, x| {
        let here = z(ids.at(y, x));
        let mut edge = false;
        let mut check = |yy: usize, xx: usize| edge |= z(ids.at(yy, xx)) < here;
        if y > 0 {
            check(y - 1, x);
        }
        if y + 1 < h {
            check(y + 1, x);
        }
        if x > 0 {
            check(y, x - 1);
        }
        if x + 1 < w {
            check(y, x + 1);
        }
        u8::from(edge)
    })
}

/// Chebyshev distance from every pixel to the nearest set pixel of `map`
/// (`u32::MAX` when the map is empty). Two-pass chamfer transform.
pub fn chebyshev_distance_transform(map: &BinaryMap) -> Grid<u32> {
    let (h, w) = map.dims();
    let inf = u32::MAX / 2;
    let mut d = map.map(|&v| if v != 0 { 0 } else { inf });
    for y in 0..h {
        for x in 0..w {
            let mut best = d.at(y, x);
            for (dy, dx) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1)] {
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                if yy >= 0 && xx >= 0 && (xx as usize) < w {
                    best = best.min(d.at(yy as usize, xx as usize) + 1);
                }
            }
            *d.get_mut(y, x) = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let mut best = d.at(y, x);
            for (dy, dx) in [(1i64, 1i64), (1, 0), (1, -1), (0, 1)] {
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                if (yy as usize) < h && xx >= 0 && (xx as usize) < w {
                    best = best.min(d.at(yy as usize, xx as usize) + 1);
                }
            }
            *d.get_mut(y, x) = best;
        }
    }
    d.map(|&v| if v >= inf { u32::MAX } else { v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_fill_matches_point_in_polygon() {
        let tri = [(2.3, 1.1), (14.7, 5.2), (5.1, 12.9)];
        let ids = rasterize_ids(16, 16, &[&tri], &[0]);
        let inside = |px: f64, py: f64| {
            let mut c = false;
            for i in 0..3 {
                let (x0, y0) = tri[i];
                let (x1, y1) = tri[(i + 1) % 3];
                if (y0 <= py) != (y1 <= py) && px < x0 + (py - y0) / (y1 - y0) * (x1 - x0) {
                    c = !c;
                }
            }
            c
        };
        for y in 0..16 {
            for x in 0..16 {
                let expect = inside(x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(ids.at(y, x) == 0, expect, "({y},{x})");
            }
        }
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut m = Grid::filled(9, 11, 0u8);
        *m.get_mut(2, 3) = 1;
        *m.get_mut(7, 9) = 1;
        let d = chebyshev_distance_transform(&m);
        for y in 0..9i64 {
            for x in 0..11i64 {
                let b = [(2i64, 3i64), (7, 9)]
                    .iter()
                    .map(|(py, px)| (y - py).abs().max((x - px).abs()))
                    .min()
                    .unwrap();
                assert_eq!(d.at(y as usize, x as usize) as i64, b);
            }
        }
        assert_eq!(chebyshev_distance_transform(&Grid::filled(2, 2, 0u8)).at(0, 0), u32::MAX);
    }
}
