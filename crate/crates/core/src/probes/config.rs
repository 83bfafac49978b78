use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    Mlp,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 2] = [ProbeKind::Linear, ProbeKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ProbeKind::Linear),
            "mlp" => Ok(ProbeKind::Mlp),
            _ => Err(Error::Usage(format!("unknown probe kind '{s}' (expected linear or mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Hidden widths; ignored by linear probes.
    pub hidden: Vec<usize>,
    pub dropout: f32,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub pixels_per_file: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn linear() -> Self {
        Self {
            kind: ProbeKind::Linear,
            hidden: Vec::new(),
            dropout: 0.0,
            lr: 1e-3,
            weight_decay: 0.01,
            batch: 512,
            max_epochs: 100,
            patience: 10,
            pixels_per_file: 2000,
            train_fraction: 0.8,
            seed: 42,
        }
    }

    pub fn mlp() -> Self {
        Self {
            kind: ProbeKind::Mlp,
            hidden: vec![512, 512],
            dropout: 0.1,
            max_epochs: 2000,
            pixels_per_file: 1000,
            ..Self::linear()
        }
    }

    pub fn for_kind(kind: ProbeKind) -> Self {
        match kind {
            ProbeKind::Linear => Self::linear(),
            ProbeKind::Mlp => Self::mlp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patience >= self.max_epochs {
            return bad(format!("patience {} must be below max_epochs {}", self.patience, self.max_epochs));
        }
        if self.pixels_per_file == 0 || self.batch == 0 {
            return bad("pixels_per_file and batch must be positive".into());
        }
        if self.kind == ProbeKind::Mlp && (self.hidden.is_empty() || self.hidden.contains(&0)) {
            return bad("mlp probes need positive hidden widths".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay non-negative".into());
        }
        Ok(())
    }
}
