//! Training checkpoints: model parameters, optimizer moments, progress
//! counters and the hash of the configuration that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{read_archive, write_archive, Archive, Uaed};
use crate::optim::Adam;
use crate::scalar::Scalar;

/// Progress counters stored in the checkpoint header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// Completed epochs; the next epoch to run.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    /// Base seed; every epoch's stream is derived from `(seed, epoch)`.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub model: Uaed<S>,
    pub optimizer: Adam<S>,
    pub progress: Progress,
    pub config: TrainConfig,
    pub config_hash: String,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_archive(&self) -> Archive<S> {
        let mut tensors = self.model.named_tensors();
        tensors.extend(self.optimizer.named_state(self.model.params()));
        Archive {
            header: serde_json::json!({
                "kind": "checkpoint",
                "model_config": self.model.config(),
                "train_config": self.config,
                "config_hash": self.config_hash,
                "progress": self.progress,
                "adam_step": self.optimizer.step,
            }),
            tensors,
        }
    }

    pub fn from_archive(archive: &Archive<S>) -> Result<Self> {
        let field = |key: &str| {
            archive
                .header
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint header has no {key}")))
        };
        let config: TrainConfig = serde_json::from_value(field("train_config")?)?;
        let config_hash: String = serde_json::from_value(field("config_hash")?)?;
        let progress: Progress = serde_json::from_value(field("progress")?)?;
        let adam_step: u64 = serde_json::from_value(field("adam_step")?)?;
        let model = Uaed::from_archive(archive)?;
        let optimizer = Adam::from_named_state(config.adam(), adam_step, model.params(), &archive.tensors)?;
        Ok(Self {
            model,
            optimizer,
            progress,
            config,
            config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_archive(path, &self.to_archive())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&read_archive(path)?)
    }
}
