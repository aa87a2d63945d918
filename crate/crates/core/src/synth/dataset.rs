use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_scene, simulate_annotator, AnnotatorProfile, Scene, SceneSpec};
use crate::annotations::{save_sample, AnnotationSet, DatasetIndex};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived_rng};

/// JSON configuration of a synthetic dataset. `K` is the number of profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_n_shapes")]
    pub n_shapes: usize,
    #[serde(default = "default_n_fine")]
    pub n_fine_shapes: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default = "default_profiles")]
    pub profiles: Vec<AnnotatorProfile>,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_side() -> usize {
    128
}
fn default_n_shapes() -> usize {
    6
}
fn default_n_fine() -> usize {
    3
}
fn default_noise() -> f64 {
    0.02
}
fn default_prefix() -> String {
    "img".to_string()
}

/// Four annotators ranging from terse and precise to detailed and sloppy.
pub fn default_profiles() -> Vec<AnnotatorProfile> {
    vec![
        AnnotatorProfile {
            jitter_px: 0.0,
            drop_rate: 0.05,
            granularity: 0.0,
        },
        AnnotatorProfile {
            jitter_px: 0.4,
            drop_rate: 0.15,
            granularity: 0.3,
        },
        AnnotatorProfile {
            jitter_px: 0.6,
            drop_rate: 0.1,
            granularity: 0.7,
        },
        AnnotatorProfile {
            jitter_px: 0.8,
            drop_rate: 0.25,
            granularity: 1.0,
        },
    ]
}

impl SynthConfig {
    pub fn new(seed: u64, n_images: usize) -> Self {
        Self {
            seed,
            n_images,
            height: default_side(),
            width: default_side(),
            n_shapes: default_n_shapes(),
            n_fine_shapes: default_n_fine(),
            noise_std: default_noise(),
            profiles: default_profiles(),
            id_prefix: default_prefix(),
        }
    }

    pub fn k(&self) -> usize {
        self.profiles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::invalid("profiles: at least one annotator profile is required"));
        }
        for (k, p) in self.profiles.iter().enumerate() {
            p.validate().map_err(|e| Error::invalid(format!("profiles[{k}]: {e}")))?;
        }
        self.scene_spec(0).validate()
    }

    pub fn image_id(&self, i: usize) -> String {
        format!("{}_{i:04}", self.id_prefix)
    }

    pub fn scene_spec(&self, i: usize) -> SceneSpec {
        let mut spec = SceneSpec::new(derive_seed(self.seed, &[i as u64]), self.height, self.width, self.n_shapes);
        spec.n_fine_shapes = self.n_fine_shapes;
        spec.noise_std = self.noise_std;
        spec
    }
}

/// Generate all scenes and annotation sets in memory, in image order.
pub fn generate_samples(config: &SynthConfig) -> Result<Vec<(Scene, AnnotationSet)>> {
    config.validate()?;
    (0..config.n_images)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(&config.scene_spec(i))?;
            let maps = config
                .profiles
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut rng = derived_rng(config.seed, &[i as u64, 1 + k as u64]);
                    simulate_annotator(&scene, p, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let set = AnnotationSet::new(config.image_id(i), maps)?;
            Ok((scene, set))
        })
        .collect()
}

/// Write the dataset under `out_dir` in the standard layout and return its index.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path) -> Result<DatasetIndex> {
    let samples = generate_samples(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let images = samples
        .par_iter()
        .map(|(scene, set)| save_sample(out_dir, &scene.image, set))
        .collect::<Result<Vec<_>>>()?;
    let index = DatasetIndex { images };
    index.write(out_dir)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{label_variance, load_dataset};
    use crate::synth::chebyshev_distance_transform;

    fn small(seed: u64, n: usize) -> SynthConfig {
        let mut c = SynthConfig::new(seed, n);
        c.height = 48;
        c.width = 48;
        c
    }

    fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn cardinality_and_byte_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small(5, 3);
        assert_eq!(cfg.k(), 4);
        generate_dataset(&cfg, a.path()).unwrap();
        generate_dataset(&cfg, b.path()).unwrap();
        let fa = files_under(a.path());
        let fb = files_under(b.path());
        let count = |prefix: &str| fa.iter().filter(|(n, _)| n.starts_with(prefix)).count();
        assert_eq!(count("images"), 3);
        assert_eq!(count("annotations"), 12);
        assert_eq!(count("index.json"), 1);
        assert_eq!(fa, fb);
        let loaded = load_dataset::<f32>(a.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded[1].annotations.k(), 4);
    }

    #[test]
    fn heterogeneous_profiles_disagree_near_edges() {
        let samples = generate_samples(&small(11, 4)).unwrap();
        for (scene, set) in &samples {
            let dist = chebyshev_distance_transform(&scene.ideal_edges);
            let mean = set.mean_map::<f64>();
            let near: Vec<usize> = (0..dist.len()).filter(|&j| dist.as_slice()[j] <= 1).collect();
            let fractional = near
                .iter()
                .filter(|&&j| {
                    let p = mean.as_slice()[j];
                    p > 0.0 && p < 1.0
                })
                .count();
            assert!(fractional as f64 >= 0.01 * near.len() as f64);

            // disagreement hugs edges: compare against all pixels
            let var = label_variance::<f64>(set);
            let d = |j: usize| dist.as_slice()[j].min(1000) as f64;
            let pos: Vec<usize> = (0..var.len()).filter(|&j| var.as_slice()[j] > 0.0).collect();
            let mean_pos = pos.iter().map(|&j| d(j)).sum::<f64>() / pos.len() as f64;
            let mean_all = (0..var.len()).map(d).sum::<f64>() / var.len() as f64;
            assert!(mean_pos < mean_all, "{mean_pos} vs {mean_all}");
        }
    }

    #[test]
    fn missing_profiles_are_rejected() {
        let mut cfg = small(1, 1);
        cfg.profiles.clear();
        let err = generate_samples(&cfg).unwrap_err().to_string();
        assert!(err.contains("profiles"));
    }
}
