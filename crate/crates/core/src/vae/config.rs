use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::Product;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    pub in_channels: usize,
    pub tile: usize,
    pub enc_channels: Vec<usize>,
    pub n_down: usize,
    pub latent_channels: usize,
    pub attn_heads: usize,
    pub groups: usize,
    pub gn_eps: f64,
    pub kl_weight: f64,
    pub log_s2_init: f32,
    pub logvar_clamp: [f32; 2],
    pub supervised: bool,
    pub head_products: Vec<Product>,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl VaeConfig {
    /// 1028 channels, 64×64 tiles, `[512, 256, 128]`, 32 latent channels.
    pub fn full() -> Self {
        Self {
            in_channels: 1028,
            tile: 64,
            enc_channels: vec![512, 256, 128],
            n_down: 2,
            latent_channels: 32,
            attn_heads: 4,
            groups: 8,
            gn_eps: 1e-6,
            kl_weight: 1e-6,
            log_s2_init: 6.0,
            logvar_clamp: [-30.0, 20.0],
            supervised: false,
            head_products: Product::ALL.to_vec(),
        }
    }

    /// Laptop-scale model for the synthetic benchmark.
    pub fn desk() -> Self {
        Self {
            in_channels: 64,
            tile: 32,
            enc_channels: vec![64, 32, 16],
            latent_channels: 8,
            ..Self::full()
        }
    }

    /// Smallest configuration exercising every block type.
    pub fn tiny() -> Self {
        Self {
            in_channels: 4,
            tile: 8,
            enc_channels: vec![8, 8, 8],
            latent_channels: 2,
            log_s2_init: 0.0,
            ..Self::full()
        }
    }

    pub fn latent_size(&self) -> usize {
        self.tile >> self.n_down
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        [self.latent_channels, self.latent_size(), self.latent_size()]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 || self.latent_channels == 0 {
            return bad("in_channels and latent_channels must be positive".into());
        }
        if self.enc_channels.len() != self.n_down + 1 {
            return bad(format!(
                "enc_channels has {} entries but n_down = {} needs {}",
                self.enc_channels.len(),
                self.n_down,
                self.n_down + 1
            ));
        }
        if self.groups == 0 || self.attn_heads == 0 {
            return bad("groups and attn_heads must be positive".into());
        }
        if let Some(c) = self.enc_channels.iter().find(|&&c| c == 0 || c % self.groups != 0) {
            return bad(format!("channel width {c} is not divisible by {} groups", self.groups));
        }
        let last = self.enc_channels[self.n_down];
        if !last.is_multiple_of(self.attn_heads) {
            return bad(format!("bottleneck width {last} is not divisible by {} heads", self.attn_heads));
        }
        if self.n_down >= usize::BITS as usize || self.tile == 0 || !self.tile.is_multiple_of(1 << self.n_down) {
            return bad(format!("tile {} is not divisible by 2^{}", self.tile, self.n_down));
        }
        if !(self.gn_eps > 0.0) || !(self.kl_weight >= 0.0) {
            return bad("gn_eps must be positive and kl_weight non-negative".into());
        }
        let [lo, hi] = self.logvar_clamp;
        if !(lo < hi) || !self.log_s2_init.is_finite() {
            return bad(format!("logvar_clamp [{lo}, {hi}] must be increasing"));
        }
        if self.supervised {
            if self.head_products.is_empty() {
                return bad("supervised model needs at least one head product".into());
            }
            let mut seen = self.head_products.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != self.head_products.len() {
                return bad("head_products contains duplicates".into());
            }
        }
        Ok(())
    }
}
