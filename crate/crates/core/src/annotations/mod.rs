//! Multi-annotator edge labels: majority fusion, label variance, per-step
//! annotation sampling and class-balance weights.

mod store;

pub use store::{load_dataset, save_sample, DatasetIndex, IndexEntry, Sample, INDEX_FILE};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, Grid};
use crate::scalar::Scalar;

/// Default majority-vote threshold for the fused baseline label.
pub const DEFAULT_FUSION_THRESHOLD: f64 = 0.3;

/// The K binary edge maps of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    image_id: String,
    maps: Vec<BinaryMap>,
}

impl AnnotationSet {
    pub fn new(image_id: impl Into<String>, maps: Vec<BinaryMap>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("annotation set needs at least one map"))?;
        for (k, m) in maps.iter().enumerate() {
            first.check_dims(m, &format!("annotation {k}"))?;
            if !m.is_binary() {
                return Err(Error::invalid(format!("annotation {k} is not binary")));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            maps,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn maps(&self) -> &[BinaryMap] {
        &self.maps
    }

    /// Number of annotators, K.
    pub fn k(&self) -> usize {
        self.maps.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    /// Apply the same geometric transform to every map.
    pub fn map_each(&self, f: impl Fn(&BinaryMap) -> BinaryMap) -> Self {
        Self {
            image_id: self.image_id.clone(),
            maps: self.maps.iter().map(f).collect(),
        }
    }

    /// Per-pixel count of annotators marking the pixel.
    pub fn vote_counts(&self) -> Grid<u32> {
        let (h, w) = self.dims();
        let mut counts = Grid::filled(h, w, 0u32);
        for m in &self.maps {
            for (c, &v) in counts.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *c += v as u32;
            }
        }
        counts
    }

    /// Per-pixel annotator mean `p`.
    pub fn mean_map<S: Scalar>(&self) -> Grid<S> {
        let k = S::of(self.k() as f64);
        self.vote_counts().map(|&c| S::of(c as f64) / k)
    }

    /// Pixels where annotators disagree (`0 < p < 1`).
    pub fn disagreement(&self) -> BinaryMap {
        let k = self.k() as u32;
        self.vote_counts().map(|&c| u8::from(c > 0 && c < k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FuseState {
    Positive,
    Negative,
    Ignore,
}

/// Tri-state majority-vote label.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedLabel {
    pub states: Grid<FuseState>,
    pub threshold: f64,
}

impl FusedLabel {
    /// Positive pixels as a binary map (ignore counts as 0).
    pub fn positives(&self) -> BinaryMap {
        self.states.map(|s| u8::from(*s == FuseState::Positive))
    }

    pub fn count(&self, state: FuseState) -> usize {
        self.states.as_slice().iter().filter(|&&s| s == state).count()
    }
}

/// Majority fusion: positive where the annotator mean reaches `threshold`,
/// negative where no annotator marked the pixel, ignored otherwise.
pub fn fuse_majority(annotations: &AnnotationSet, threshold: f64) -> Result<FusedLabel> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("fusion threshold {threshold} outside (0, 1]")));
    }
    let k = annotations.k() as f64;
    let states = annotations.vote_counts().map(|&c| {
        if c == 0 {
            FuseState::Negative
        } else if c as f64 / k >= threshold {
            FuseState::Positive
        } else {
            FuseState::Ignore
        }
    });
    Ok(FusedLabel { states, threshold })
}

/// Population variance of the K binary labels at each pixel, `p (1 - p)`.
pub fn label_variance<S: Scalar>(annotations: &AnnotationSet) -> Grid<S> {
    let k = annotations.k() as f64;
    let mean = annotations.mean_map::<f64>();
    let mut var = Grid::filled(mean.height(), mean.width(), 0.0f64);
    for m in annotations.maps() {
        for ((v, &p), &y) in var.as_mut_slice().iter_mut().zip(mean.as_slice()).zip(m.as_slice()) {
            let d = y as f64 - p;
            *v += d * d;
        }
    }
    var.map(|&v| S::of(v / k))
}

/// Index of one of the K maps, chosen uniformly.
pub fn sample_annotation_index<R: Rng + ?Sized>(annotations: &AnnotationSet, rng: &mut R) -> usize {
    rng.random_range(0..annotations.k())
}

pub fn sample_annotation<'a, R: Rng + ?Sized>(annotations: &'a AnnotationSet, rng: &mut R) -> &'a BinaryMap {
    &annotations.maps()[sample_annotation_index(annotations, rng)]
}

/// Class-balance weights `M`: `alpha` on positives, `1 - alpha` on negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap<S> {
    pub alpha: S,
    pub weights: Grid<S>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl<S: Scalar> WeightMap<S> {
    /// All weights vanish when one class is absent.
    pub fn is_degenerate(&self) -> bool {
        self.n_pos == 0 || self.n_neg == 0
    }

    pub fn total(&self) -> S {
        self.weights.as_slice().iter().copied().sum()
    }

    pub fn scaled(&self, k: S) -> Self {
        Self {
            alpha: self.alpha,
            weights: self.weights.map(|&w| w * k),
            n_pos: self.n_pos,
            n_neg: self.n_neg,
        }
    }
}

/// `alpha = n_neg / (n_neg + n_pos)`, `M_j = alpha Y_j + (1 - alpha)(1 - Y_j)`.
pub fn weight_map<S: Scalar>(label: &BinaryMap) -> Result<WeightMap<S>> {
    if !label.is_binary() {
        return Err(Error::invalid("label is not binary"));
    }
    if label.is_empty() {
        return Err(Error::invalid("empty label"));
    }
    let n_pos = label.count_ones();
    let n_neg = label.len() - n_pos;
    let alpha = S::of(n_neg as f64 / (n_neg + n_pos) as f64);
    let weights = if n_pos == 0 || n_neg == 0 {
        label.map(|_| S::zero())
    } else {
        label.map(|&y| if y != 0 { alpha } else { S::one() - alpha })
    };
    Ok(WeightMap {
        alpha,
        weights,
        n_pos,
        n_neg,
    })
}

/// Balance weights for a fused label: ignored pixels get weight 0 and are
/// excluded from the class counts.
pub fn weight_map_fused<S: Scalar>(label: &FusedLabel) -> WeightMap<S> {
    let n_pos = label.count(FuseState::Positive);
    let n_neg = label.count(FuseState::Negative);
    let alpha = if n_pos + n_neg == 0 {
        S::zero()
    } else {
        S::of(n_neg as f64 / (n_neg + n_pos) as f64)
    };
    let degenerate = n_pos == 0 || n_neg == 0;
    let weights = label.states.map(|s| match s {
        _ if degenerate => S::zero(),
        FuseState::Positive => alpha,
        FuseState::Negative => S::one() - alpha,
        FuseState::Ignore => S::zero(),
    });
    WeightMap {
        alpha,
        weights,
        n_pos,
        n_neg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// K maps of size 1×1 where the first `marked` annotators mark the pixel.
    fn single_pixel(k: usize, marked: usize) -> AnnotationSet {
        let maps = (0..k)
            .map(|i| Grid::filled(1, 1, u8::from(i < marked)))
            .collect();
        AnnotationSet::new("px", maps).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let t = DEFAULT_FUSION_THRESHOLD;
        let state = |k, m| *fuse_majority(&single_pixel(k, m), t).unwrap().states.get(0, 0);
        assert_eq!(state(4, 2), FuseState::Positive);
        assert_eq!(state(4, 0), FuseState::Negative);
        assert_eq!(state(4, 1), FuseState::Ignore);
        assert_eq!(state(4, 4), FuseState::Positive);
    }

    #[test]
    fn fusion_rejects_bad_threshold() {
        let a = single_pixel(2, 1);
        assert!(fuse_majority(&a, 0.0).is_err());
        assert!(fuse_majority(&a, 1.5).is_err());
        assert!(fuse_majority(&a, 1.0).is_ok());
    }

    #[test]
    fn empty_or_mismatched_sets_are_rejected() {
        assert!(AnnotationSet::new("x", vec![]).is_err());
        let a = Grid::filled(2, 2, 0u8);
        let b = Grid::filled(2, 3, 0u8);
        assert!(AnnotationSet::new("x", vec![a.clone(), b]).is_err());
        let c = Grid::filled(2, 2, 2u8);
        assert!(AnnotationSet::new("x", vec![a, c]).is_err());
    }

    #[test]
    fn variance_examples() {
        let v = |k, m| label_variance::<f64>(&single_pixel(k, m)).at(0, 0);
        assert_eq!(v(4, 2), 0.25);
        assert_eq!(v(4, 0), 0.0);
        assert_eq!(v(4, 4), 0.0);
        // brute force over the five values {1, 0, 0, 0, 0}
        let vals = [1.0, 0.0, 0.0, 0.0, 0.0];
        let mean = vals.iter().sum::<f64>() / 5.0;
        let oracle = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        assert!((oracle - 0.16).abs() < 1e-15);
        assert!((v(5, 1) - oracle).abs() < 1e-15);
    }

    #[test]
    fn weight_map_examples() {
        let mut label = Grid::filled(3, 3, 0u8);
        *label.get_mut(1, 1) = 1;
        let wm = weight_map::<f64>(&label).unwrap();
        assert!((wm.alpha - 8.0 / 9.0).abs() < 1e-15);
        assert!((wm.weights.at(1, 1) - 8.0 / 9.0).abs() < 1e-15);
        assert!((wm.weights.at(0, 0) - 1.0 / 9.0).abs() < 1e-15);

        let wm = weight_map::<f64>(&Grid::filled(4, 4, 0u8)).unwrap();
        assert_eq!(wm.alpha, 1.0);
        assert!(wm.is_degenerate());
        assert!(wm.weights.as_slice().iter().all(|&w| w == 0.0));

        let label = Grid::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let wm = weight_map::<f64>(&label).unwrap();
        assert_eq!(wm.alpha, 0.5);
        assert!(wm.weights.as_slice().iter().all(|&w| w == 0.5));

        assert!(weight_map::<f64>(&Grid::filled(1, 2, 3u8)).is_err());
    }

    #[test]
    fn fused_weights_ignore_dropped_pixels() {
        let maps = vec![
            Grid::from_vec(1, 4, vec![1, 1, 0, 0]).unwrap(),
            Grid::from_vec(1, 4, vec![1, 0, 0, 0]).unwrap(),
            Grid::from_vec(1, 4, vec![1, 0, 0, 0]).unwrap(),
            Grid::from_vec(1, 4, vec![0, 0, 0, 0]).unwrap(),
        ];
        let set = AnnotationSet::new("f", maps).unwrap();
        let fused = fuse_majority(&set, 0.3).unwrap();
        let wm = weight_map_fused::<f64>(&fused);
        assert_eq!((wm.n_pos, wm.n_neg), (1, 2));
        let expect = [2.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0];
        for (w, e) in wm.weights.as_slice().iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_uniform_and_deterministic() {
        let maps = (0..4).map(|k| Grid::filled(2, 2, u8::from(k % 2 == 0))).collect();
        let set = AnnotationSet::new("s", maps).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            assert_eq!(sample_annotation_index(&set, &mut a), sample_annotation_index(&set, &mut b));
        }
        let mut counts = [0usize; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10_000 {
            counts[sample_annotation_index(&set, &mut rng)] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
        // chi-square, 3 dof, p = 0.001 critical value
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts {counts:?}");
        assert!(counts.iter().all(|&c| (2300..=2700).contains(&c)), "{counts:?}");

        let one = AnnotationSet::new("one", vec![Grid::filled(2, 2, 1u8)]).unwrap();
        assert_eq!(sample_annotation(&one, &mut rng), &one.maps()[0]);
    }

    fn binary_grid(h: usize, w: usize) -> impl Strategy<Value = BinaryMap> {
        prop::collection::vec(0u8..=1, h * w).prop_map(move |d| Grid::from_vec(h, w, d).unwrap())
    }

    proptest! {
        #[test]
        fn weight_sum_identity(label in (1usize..12, 1usize..12).prop_flat_map(|(h, w)| binary_grid(h, w))) {
            let wm = weight_map::<f64>(&label).unwrap();
            let (np, nn) = (wm.n_pos as f64, wm.n_neg as f64);
            let expected = if np + nn > 0.0 { 2.0 * np * nn / (np + nn) } else { 0.0 };
            prop_assert!((wm.total() - expected).abs() < 1e-9);
        }

        #[test]
        fn fusion_partitions_pixels(maps in prop::collection::vec(binary_grid(4, 5), 1..7), t in 0.01f64..=1.0) {
            let set = AnnotationSet::new("p", maps).unwrap();
            let fused = fuse_majority(&set, t).unwrap();
            let total = fused.count(FuseState::Positive) + fused.count(FuseState::Negative) + fused.count(FuseState::Ignore);
            prop_assert_eq!(total, 20);
            let tiny = fuse_majority(&set, 1e-9).unwrap();
            prop_assert_eq!(tiny.count(FuseState::Ignore), 0);
        }

        #[test]
        fn sampled_map_is_a_member(maps in prop::collection::vec(binary_grid(3, 3), 1..6), seed in any::<u64>()) {
            let set = AnnotationSet::new("m", maps).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = sample_annotation(&set, &mut rng);
            prop_assert!(set.maps().iter().any(|m| m == picked));
        }
    }
}
