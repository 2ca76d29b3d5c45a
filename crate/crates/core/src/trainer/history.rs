use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::losses::LossReport;

/// Per-epoch training record. Losses are averaged over the epoch's batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// 1-based, counted across stages.
    pub epoch: usize,
    /// 1-based stage number.
    pub stage: usize,
    /// Learning rate at the epoch's first step.
    pub lr: f64,
    pub total: f64,
    pub seg: f64,
    pub rec: f64,
    pub cls: f64,
    /// Thresholded validation dice; NaN when there is no validation split.
    pub val_dsc_od: f64,
    pub val_dsc_oc: f64,
}

pub fn write_history<W: std::io::Write>(out: W, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("history csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::invalid(format!("history csv: {e}")))
}

pub fn save_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_history(std::io::BufWriter::new(file), rows)
}

pub fn load_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// What a finished run reports next to its checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub config: RunConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    pub steps: usize,
    pub parameters: usize,
    /// Mean losses of the last epoch.
    pub final_loss: LossReport,
    /// Last-epoch validation dice, absent without a validation split.
    pub val_dsc_od: Option<f64>,
    pub val_dsc_oc: Option<f64>,
}

impl RunSummary {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("summary serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// `<ckpt>.history.csv` and `<ckpt>.summary.json`.
pub fn sidecar_paths(checkpoint: &Path) -> (PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut s = checkpoint.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with(".history.csv"), with(".summary.json"))
}
