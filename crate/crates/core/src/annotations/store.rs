//! On-disk dataset layout:
//!
//! ```text
//! <root>/index.json
//! <root>/images/<image_id>.png            RGB
//! <root>/annotations/<image_id>/ann_<k>.png   8-bit gray, 0 or 255
//! ```
//!
//! `index.json` maps each image id to its image path and annotation
//! directory, both relative to the root. Annotation files inside a directory
//! are read in lexicographic order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AnnotationSet;
use crate::error::{Error, Result};
use crate::imageio;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub image_id: String,
    pub image: String,
    pub annotations: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub images: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(INDEX_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// One training/evaluation example.
#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub image: Tensor<S>,
    pub annotations: AnnotationSet,
}

impl<S> Sample<S> {
    pub fn image_id(&self) -> &str {
        self.annotations.image_id()
    }
}

/// Writes one image and its annotations; returns the index entry to record.
pub fn save_sample<S: Scalar>(root: &Path, image: &Tensor<S>, annotations: &AnnotationSet) -> Result<IndexEntry> {
    let id = annotations.image_id();
    let image_rel = format!("images/{id}.png");
    let ann_rel = format!("annotations/{id}");
    imageio::write_rgb(&root.join(&image_rel), image)?;
    for (k, m) in annotations.maps().iter().enumerate() {
        imageio::write_binary(&root.join(&ann_rel).join(format!("ann_{k}.png")), m)?;
    }
    Ok(IndexEntry {
        image_id: id.to_string(),
        image: image_rel,
        annotations: ann_rel,
    })
}

fn annotation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_entry<S: Scalar>(root: &Path, entry: &IndexEntry) -> Result<Sample<S>> {
    let image = imageio::read_rgb(&root.join(&entry.image))?;
    let files = annotation_files(&root.join(&entry.annotations))?;
    let maps = files
        .iter()
        .map(|f| imageio::read_binary(f))
        .collect::<Result<Vec<_>>>()?;
    let annotations = AnnotationSet::new(entry.image_id.clone(), maps)?;
    let (_, h, w) = image.chw();
    if annotations.dims() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "image {} is {h}x{w} but annotations are {:?}",
            entry.image_id,
            annotations.dims()
        )));
    }
    Ok(Sample { image, annotations })
}

/// Loads every entry of `<root>/index.json`, in index order.
pub fn load_dataset<S: Scalar>(root: &Path) -> Result<Vec<Sample<S>>> {
    let index = DatasetIndex::read(root)?;
    index.images.iter().map(|e| load_entry(root, e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let image = Tensor::<f32>::from_vec(
            &[3, 2, 3],
            (0..18).map(|i| (i * 15) as f32 / 255.0).collect(),
        )
        .unwrap();
        let maps = vec![
            Grid::from_vec(2, 3, vec![1, 0, 0, 0, 1, 0]).unwrap(),
            Grid::from_vec(2, 3, vec![0, 0, 1, 0, 1, 1]).unwrap(),
        ];
        let set = AnnotationSet::new("im0", maps).unwrap();
        let entry = save_sample(dir.path(), &image, &set).unwrap();
        DatasetIndex { images: vec![entry] }.write(dir.path()).unwrap();
        let loaded = load_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].annotations, set);
        assert_eq!(loaded[0].image, image);
    }

    #[test]
    fn missing_index_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset::<f32>(dir.path()), Err(Error::Io { .. })));
    }
}
