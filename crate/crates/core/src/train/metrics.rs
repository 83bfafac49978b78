use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::vae::VaeConfig;

/// Loss terms of one step or one validation pass. `total` includes the
/// head terms when the model is supervised.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub rec: f64,
    pub nll: f64,
    pub kl: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub head_mse: BTreeMap<String, f64>,
    /// Heads whose targets had no valid pixel in this batch or set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub empty_heads: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub vae: VaeConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub n_train: usize,
    pub val_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricsRecord {
    Header(Box<RunHeader>),
    Train {
        step: u64,
        #[serde(flatten)]
        metrics: Metrics,
        clip_scale: f64,
        grad_norm: f64,
        log_s2: f64,
    },
    Val {
        step: u64,
        #[serde(flatten)]
        metrics: Metrics,
    },
}

impl MetricsRecord {
    pub fn step(&self) -> Option<u64> {
        match self {
            MetricsRecord::Header(_) => None,
            MetricsRecord::Train { step, .. } | MetricsRecord::Val { step, .. } => Some(*step),
        }
    }
}

/// Append-only line-delimited JSON log.
pub struct MetricsLog {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl MetricsLog {
    pub fn create(path: &Path, header: RunHeader) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = Self {
            file,
            path: path.to_path_buf(),
        };
        log.append(&MetricsRecord::Header(Box::new(header)))?;
        Ok(log)
    }

    /// Reopen an existing log, dropping every record after `step`.
    pub fn resume(path: &Path, step: u64) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut kept = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MetricsRecord = serde_json::from_str(&line)?;
            if rec.step().is_none_or(|s| s <= step) {
                kept.push(line);
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for line in kept {
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rec: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(rec)?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
