//! One-to-one correspondence between predicted and human edge pixels within
//! a distance tolerance.

use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::error::Result;
use crate::grid::BinaryMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Candidate pairs taken in order of distance; among equal distances the
    /// pair with fewer competing candidates goes first.
    Greedy,
    /// Maximum number of matches, then minimum total distance (Hungarian
    /// assignment per connected component).
    Exact,
}

pub type Pixel = (usize, usize);

/// A candidate pair: indices into the predicted and human pixel lists and
/// the squared distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub pred: usize,
    pub gt: usize,
    pub d2: u64,
}

pub fn pixels(map: &BinaryMap) -> Vec<Pixel> {
    let (h, w) = map.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if map.at(y, x) != 0 {
                out.push((y, x));
            }
        }
    }
    out
}

/// Every pair within `max_dist` (inclusive), ordered by predicted pixel and
/// then by human pixel.
pub fn candidates(pred: &[Pixel], gt: &[Pixel], max_dist: f64) -> Vec<Candidate> {
    if pred.is_empty() || gt.is_empty() || !(max_dist >= 0.0) {
        return Vec::new();
    }
    let r = max_dist.floor() as isize;
    let r2 = max_dist * max_dist;
    let h = gt.iter().chain(pred).map(|p| p.0).max().unwrap_or(0) + 1;
    let w = gt.iter().chain(pred).map(|p| p.1).max().unwrap_or(0) + 1;
    let mut index = vec![usize::MAX; h * w];
    for (i, &(y, x)) in gt.iter().enumerate() {
        index[y * w + x] = i;
    }
    let mut out = Vec::new();
    for (pi, &(py, px)) in pred.iter().enumerate() {
        let mut row = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dy * dy + dx * dx) as u64;
                if d2 as f64 > r2 {
                    continue;
                }
                let (y, x) = (py as isize + dy, px as isize + dx);
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    continue;
                }
                let gi = index[y as usize * w + x as usize];
                if gi != usize::MAX {
                    row.push(Candidate { pred: pi, gt: gi, d2 });
                }
            }
        }
        row.sort_by_key(|c| c.gt);
        out.extend(row);
    }
    out
}

/// Matched `(pred, gt)` index pairs; each index appears at most once.
pub fn match_pixels(pred: &[Pixel], gt: &[Pixel], max_dist: f64, matcher: Matcher) -> Vec<(usize, usize)> {
    let cands = candidates(pred, gt, max_dist);
    match matcher {
        Matcher::Greedy => greedy(&cands, pred.len(), gt.len()),
        Matcher::Exact => exact(&cands, pred.len(), gt.len(), max_dist),
    }
}

pub fn greedy(cands: &[Candidate], n_pred: usize, n_gt: usize) -> Vec<(usize, usize)> {
    let mut deg_p = vec![0usize; n_pred];
    let mut deg_g = vec![0usize; n_gt];
    for c in cands {
        deg_p[c.pred] += 1;
        deg_g[c.gt] += 1;
    }
    let mut order: Vec<&Candidate> = cands.iter().collect();
    order.sort_by_key(|c| (c.d2, deg_p[c.pred] + deg_g[c.gt], c.pred, c.gt));
    let mut used_p = vec![false; n_pred];
    let mut used_g = vec![false; n_gt];
    let mut out = Vec::new();
    for c in order {
        if !used_p[c.pred] && !used_g[c.gt] {
            used_p[c.pred] = true;
            used_g[c.gt] = true;
            out.push((c.pred, c.gt));
        }
    }
    out.sort_unstable();
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn exact(cands: &[Candidate], n_pred: usize, n_gt: usize, max_dist: f64) -> Vec<(usize, usize)> {
    // nodes: preds then gts
    let mut parent: Vec<usize> = (0..n_pred + n_gt).collect();
    for c in cands {
        let (a, b) = (find(&mut parent, c.pred), find(&mut parent, n_pred + c.gt));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut comps: std::collections::BTreeMap<usize, Vec<&Candidate>> = std::collections::BTreeMap::new();
    for c in cands {
        let root = find(&mut parent, c.pred);
        comps.entry(root).or_default().push(c);
    }
    let mut out = Vec::new();
    for edges in comps.values() {
        let mut ps: Vec<usize> = edges.iter().map(|c| c.pred).collect();
        let mut gs: Vec<usize> = edges.iter().map(|c| c.gt).collect();
        ps.sort_unstable();
        ps.dedup();
        gs.sort_unstable();
        gs.dedup();
        let (n, m) = (ps.len(), gs.len());
        let size = n + m;
        // an unmatched pixel costs more than any set of matches can save
        let outlier = (size as f64 + 1.0) * (max_dist + 1.0);
        let forbidden = 4.0 * outlier;
        let mut cost = vec![vec![0.0; size]; size];
        for (i, row) in cost.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = match (i < n, j < m) {
                    (true, true) => forbidden,
                    (true, false) | (false, true) => outlier,
                    (false, false) => 0.0,
                };
            }
        }
        for c in edges.iter() {
            let i = ps.binary_search(&c.pred).expect("member");
            let j = gs.binary_search(&c.gt).expect("member");
            cost[i][j] = (c.d2 as f64).sqrt();
        }
        let assign = hungarian(&cost);
        for (i, &j) in assign.iter().enumerate().take(n) {
            if j < m && cost[i][j] < forbidden {
                out.push((ps[i], gs[j]));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Minimum-cost assignment of a square cost matrix; `result[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Counts for one binarized prediction against all annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Correspondence {
    /// Predicted pixels matched in at least one annotation.
    pub tp_pred: u64,
    pub n_pred: u64,
    /// Human pixels matched, summed over annotations.
    pub tp_gt: u64,
    pub n_gt: u64,
}

pub fn correspond(pred: &BinaryMap, annotations: &AnnotationSet, max_dist_px: f64, matcher: Matcher) -> Result<Correspondence> {
    pred.check_dims(&annotations.maps()[0], "prediction vs annotations")?;
    let pp = pixels(pred);
    let mut hit = vec![false; pp.len()];
    let mut out = Correspondence {
        n_pred: pp.len() as u64,
        ..Default::default()
    };
    for map in annotations.maps() {
        let gp = pixels(map);
        let pairs = match_pixels(&pp, &gp, max_dist_px, matcher);
        out.n_gt += gp.len() as u64;
        out.tp_gt += pairs.len() as u64;
        for (p, _) in pairs {
            hit[p] = true;
        }
    }
    out.tp_pred = hit.iter().filter(|&&h| h).count() as u64;
    Ok(out)
}
