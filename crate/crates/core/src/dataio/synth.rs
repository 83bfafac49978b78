//! Synthetic granules with planted absorber and cloud fields.
//!
//! Radiance per pixel is
//! `r(λ) = B(λ)·exp(−Σ_k a_k σ_k(λ))·(1 − f) + B_cloud(λ)·f`
//! times multiplicative lognormal noise, and the Level-2 truth is a linear
//! readout of the same `a_k` and `f` fields.

use serde::{Deserialize, Serialize};

use super::l2::{L2Map, L2ProductSet};
use super::tile::{HyperspectralTile, TileSpace};
use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;

pub const N_ABSORBERS: usize = 3;
const MODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub channels: usize,
    pub tile: usize,
    /// Spatial correlation length of the absorber and cloud fields, in pixels.
    pub smoothness: f64,
    /// Std of the log-space multiplicative noise.
    pub noise: f64,
    /// Per-pixel probability that an L2 value is reported as NaN.
    pub nan_fraction: f64,
    /// Upper bound of each absorber's optical-depth scale.
    pub absorber_max: [f64; N_ABSORBERS],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            tile: 32,
            smoothness: 10.0,
            noise: 0.01,
            nan_fraction: 0.05,
            absorber_max: [0.4, 2.0, 0.3],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.tile == 0 {
            return bad(format!("synth channels and tile must be positive, got {} and {}", self.channels, self.tile));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return bad(format!("synth smoothness must be positive, got {}", self.smoothness));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("synth noise must be non-negative, got {}", self.noise));
        }
        if !(0.0..1.0).contains(&self.nan_fraction) {
            return bad(format!("synth nan_fraction must lie in [0, 1), got {}", self.nan_fraction));
        }
        if self.absorber_max.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad(format!("synth absorber_max entries must be positive, got {:?}", self.absorber_max));
        }
        Ok(())
    }
}

/// Fixed spectral templates on a normalized wavelength grid `t ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectra {
    pub continuum: Vec<f64>,
    pub cloud: Vec<f64>,
    pub cross_sections: [Vec<f64>; N_ABSORBERS],
}

fn bumps(t: &[f64], centers: &[f64], width: f64, amps: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = t
        .iter()
        .map(|&x| centers.iter().zip(amps).map(|(c, a)| a * (-(x - c).powi(2) / (2.0 * width * width)).exp()).sum())
        .collect();
    let mx = raw.iter().copied().fold(0.0, f64::max);
    raw.into_iter().map(|v| if mx > 0.0 { v / mx } else { 0.0 }).collect()
}

impl Spectra {
    pub fn new(channels: usize) -> Self {
        let t: Vec<f64> = (0..channels)
            .map(|i| if channels == 1 { 0.5 } else { i as f64 / (channels - 1) as f64 })
            .collect();
        let continuum = t.iter().map(|x| (7.0 + 2.0 * x - 1.2 * x * x).exp()).collect();
        let cloud = t.iter().map(|x| (7.9 + 1.2 * x - 0.7 * x * x).exp()).collect();
        let cross_sections = [
            bumps(&t, &[0.55, 0.62, 0.70, 0.78, 0.86], 0.02, &[1.0, 0.8, 1.0, 0.7, 0.6]),
            bumps(&t, &[-0.05], 0.15, &[1.0]),
            bumps(&t, &[0.12, 0.18, 0.24, 0.30, 0.36], 0.015, &[0.7, 1.0, 0.9, 0.8, 0.5]),
        ];
        Self {
            continuum,
            cloud,
            cross_sections,
        }
    }
}

/// Planted per-pixel fields, row-major over the tile.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFields {
    pub absorbers: [Vec<f64>; N_ABSORBERS],
    pub cloud: Vec<f64>,
}

/// Approximately unit-variance smooth random field from a few random plane waves.
fn smooth_field(n: usize, corr: f64, rng: &mut RngState) -> Vec<f64> {
    let fmax = 1.0 / corr;
    let modes: Vec<[f64; 4]> = (0..MODES)
        .map(|_| {
            let f = rng.uniform_range(0.15, 1.0) * fmax;
            let th = rng.uniform_range(0.0, std::f64::consts::TAU);
            let ph = rng.uniform_range(0.0, std::f64::consts::TAU);
            [f * th.cos(), f * th.sin(), ph, rng.normal()]
        })
        .collect();
    let norm = (2.0 / MODES as f64).sqrt();
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let v: f64 = modes
                .iter()
                .map(|[kx, ky, ph, amp]| amp * (std::f64::consts::TAU * (kx * x as f64 + ky * y as f64) + ph).cos())
                .sum();
            out.push(v * norm);
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn synth_fields(cfg: &SynthConfig, rng: &mut RngState) -> SynthFields {
    let n = cfg.tile;
    let absorbers = std::array::from_fn(|k| {
        let level = rng.normal();
        let f = smooth_field(n, cfg.smoothness, rng);
        f.into_iter().map(|v| cfg.absorber_max[k] * sigmoid(1.2 * (0.8 * v + level))).collect()
    });
    let threshold = rng.uniform_range(-1.5, 1.5);
    let cloud = smooth_field(n, cfg.smoothness, rng)
        .into_iter()
        .map(|v| ((v - threshold) / 0.6).clamp(0.0, 1.0))
        .collect();
    SynthFields { absorbers, cloud }
}

/// Raw radiance cube for the given fields, channel-major.
pub fn render_radiance(cfg: &SynthConfig, spectra: &Spectra, fields: &SynthFields, rng: &mut RngState) -> Vec<f32> {
    let plane = cfg.tile * cfg.tile;
    let mut out = vec![0f32; cfg.channels * plane];
    for p in 0..plane {
        let f = fields.cloud[p];
        for c in 0..cfg.channels {
            let tau: f64 = (0..N_ABSORBERS).map(|k| fields.absorbers[k][p] * spectra.cross_sections[k][c]).sum();
            let clear = spectra.continuum[c] * (-tau).exp();
            let mut r = clear * (1.0 - f) + spectra.cloud[c] * f;
            if cfg.noise > 0.0 {
                r *= (cfg.noise * rng.normal()).exp();
            }
            out[c * plane + p] = r as f32;
        }
    }
    out
}

/// Level-2 truth from the planted fields, with a random NaN mask per product.
pub fn l2_truth(cfg: &SynthConfig, fields: &SynthFields, rng: &mut RngState) -> Vec<L2Map> {
    Product::ALL
        .iter()
        .map(|&product| {
            let values: Vec<f64> = match product {
                Product::No2 => fields.absorbers[0].iter().map(|a| a * 2.5e16).collect(),
                Product::O3 => fields.absorbers[1].iter().map(|a| 200.0 + 300.0 * a / cfg.absorber_max[1]).collect(),
                Product::Hcho => fields.absorbers[2].iter().map(|a| a * 5e16).collect(),
                Product::Cloud => fields.cloud.clone(),
            };
            let data = values
                .into_iter()
                .map(|v| if rng.uniform() < cfg.nan_fraction { f32::NAN } else { v as f32 })
                .collect();
            L2Map {
                product,
                kind: product.kind(),
                data,
            }
        })
        .collect()
}

pub fn synth_generate(id: &str, cfg: &SynthConfig, rng: &mut RngState) -> Result<(HyperspectralTile, L2ProductSet)> {
    cfg.validate()?;
    let spectra = Spectra::new(cfg.channels);
    let fields = synth_fields(cfg, rng);
    let radiance = render_radiance(cfg, &spectra, &fields, rng);
    let maps = l2_truth(cfg, &fields, rng);
    let tile = HyperspectralTile::new(id, cfg.channels, cfg.tile, cfg.tile, TileSpace::Raw, radiance)?;
    let l2 = L2ProductSet::new(id, cfg.tile, cfg.tile, maps)?;
    Ok((tile, l2))
}
