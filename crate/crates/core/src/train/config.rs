use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: [f64; 2],
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub steps: u64,
    pub batch: usize,
    pub val_every: u64,
    pub ckpt_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl TrainConfig {
    pub fn full() -> Self {
        Self {
            lr: 1e-4,
            betas: [0.9, 0.95],
            weight_decay: 0.05,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            steps: 200_000,
            batch: 32,
            val_every: 50,
            ckpt_every: 5000,
            seed: 42,
        }
    }

    pub fn desk() -> Self {
        Self {
            steps: 3000,
            batch: 8,
            ckpt_every: 1000,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if self.betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return bad("betas must lie in (0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) || !(self.clip_norm > 0.0) {
            return bad("weight_decay must be non-negative; adam_eps and clip_norm positive");
        }
        if self.batch == 0 || self.val_every == 0 || self.ckpt_every == 0 {
            return bad("batch, val_every and ckpt_every must be positive");
        }
        Ok(())
    }
}

/// How tiles are split and prepared for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train_pct: u32,
    pub val_size: usize,
    pub buffer_capacity: usize,
    /// L2 maps are mean-pooled by this factor to the latent grid.
    pub pool_factor: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_pct: 70,
            val_size: 100,
            buffer_capacity: crate::dataio::TRAIN_BUFFER_CAPACITY,
            pool_factor: 4,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_pct > 100 {
            return Err(Error::Config(format!("train_pct {} exceeds 100", self.train_pct)));
        }
        if self.val_size == 0 || self.buffer_capacity == 0 || self.pool_factor == 0 {
            return Err(Error::Config("val_size, buffer_capacity and pool_factor must be positive".into()));
        }
        Ok(())
    }
}
