//! Two-stage training, evaluation and run bookkeeping.

mod config;
mod eval;
mod history;
mod optim;
mod train;

pub use config::{config_hash, RunConfig, StageConfig};
pub use eval::{adapt_images, evaluate, predict, predict_masks};
pub use history::{load_history, save_history, sidecar_paths, write_history, HistoryRow, RunSummary};
pub use optim::{cosine_lr, optimizer_step, Adam};
pub use train::{prepare_samples, stratified_split, train, train_with, TrainOutcome};

use std::path::Path;

use crate::error::Result;
use crate::model::save_checkpoint;

impl TrainOutcome {
    /// Writes the checkpoint and its history and summary sidecars.
    pub fn save(&self, checkpoint: &Path) -> Result<()> {
        save_checkpoint(&self.params, checkpoint)?;
        let (history, summary) = sidecar_paths(checkpoint);
        save_history(&history, &self.history)?;
        self.summary.save(&summary)
    }
}
