//! Radiance z-scoring in log space and the Level-2 product transforms.

mod l2;

pub use l2::*;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{HyperspectralTile, TileSpace};
use crate::error::{Error, Result};

pub const STATS_VERSION: u32 = 1;
pub const Z_CLIP: f64 = 10.0;
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

/// Per-channel mean and population standard deviation of `ln(max(r, 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadianceStats {
    pub version: u32,
    pub channels: usize,
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
    pub pixel_count: u64,
    pub source_ids: Vec<String>,
}

impl RadianceStats {
    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.channels || self.sigma.len() != self.channels {
            return Err(Error::Data(format!(
                "stats declare {} channels but carry {} means and {} deviations",
                self.channels,
                self.mu.len(),
                self.sigma.len()
            )));
        }
        if let Some(i) = self.sigma.iter().position(|s| !(*s >= 0.0)) {
            return Err(Error::Data(format!("stats sigma[{i}] = {} is negative or NaN", self.sigma[i])));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check_channels(&self, c: usize) -> Result<()> {
        if c != self.channels {
            return Err(Error::Data(format!("tile has {c} channels, stats have {}", self.channels)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
}

/// Single-pass accumulator behind [`compute_radiance_stats`].
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    acc: Vec<Welford>,
    pixels: u64,
    ids: Vec<String>,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tile: &HyperspectralTile) -> Result<()> {
        if self.acc.is_empty() {
            self.acc = vec![Welford::default(); tile.channels];
        } else if self.acc.len() != tile.channels {
            return Err(Error::Data(format!(
                "tile {} has {} channels, earlier tiles have {}",
                tile.id,
                tile.channels,
                self.acc.len()
            )));
        }
        for (c, w) in self.acc.iter_mut().enumerate() {
            for &r in tile.channel(c) {
                w.push(f64::from(r).max(1.0).ln());
            }
        }
        self.pixels += tile.plane() as u64;
        self.ids.push(tile.id.clone());
        Ok(())
    }

    pub fn finish(self) -> Result<RadianceStats> {
        if self.acc.is_empty() {
            return Err(Error::Data("radiance statistics need at least one tile".into()));
        }
        Ok(RadianceStats {
            version: STATS_VERSION,
            channels: self.acc.len(),
            mu: self.acc.iter().map(|w| w.mean as f32).collect(),
            sigma: self.acc.iter().map(|w| (w.m2 / w.n as f64).sqrt() as f32).collect(),
            pixel_count: self.pixels,
            source_ids: self.ids,
        })
    }
}

pub fn compute_radiance_stats<'a>(tiles: impl IntoIterator<Item = &'a HyperspectralTile>) -> Result<RadianceStats> {
    let mut acc = StatsAccumulator::new();
    for t in tiles {
        acc.push(t)?;
    }
    acc.finish()
}

/// In-place radiance transform of a channel-major `[C, plane]` buffer.
pub fn transform_radiance_slice(data: &mut [f32], channels: usize, stats: &RadianceStats, direction: Direction) -> Result<()> {
    stats.check_channels(channels)?;
    if !data.len().is_multiple_of(channels) {
        return Err(Error::Data(format!("{} values do not split into {channels} channels", data.len())));
    }
    let plane = data.len() / channels;
    for (c, chunk) in data.chunks_mut(plane).enumerate() {
        let mu = f64::from(stats.mu[c]);
        let den = f64::from(stats.sigma[c]) + SIGMA_FLOOR;
        match direction {
            Direction::Forward => {
                for v in chunk {
                    let z = (f64::from(*v).max(1.0).ln() - mu) / den;
                    *v = z.clamp(-Z_CLIP, Z_CLIP) as f32;
                }
            }
            Direction::Inverse => {
                for v in chunk {
                    *v = (f64::from(*v) * den + mu).exp() as f32;
                }
            }
        }
    }
    Ok(())
}

pub fn transform_radiance(tile: &HyperspectralTile, stats: &RadianceStats, direction: Direction) -> Result<HyperspectralTile> {
    let (expect, space) = match direction {
        Direction::Forward => (TileSpace::Raw, TileSpace::Normalized),
        Direction::Inverse => (TileSpace::Normalized, TileSpace::Raw),
    };
    if tile.space != expect {
        return Err(Error::Data(format!("{direction:?} radiance transform needs a {expect:?} tile, got {:?}", tile.space)));
    }
    let mut out = tile.clone();
    transform_radiance_slice(&mut out.data, tile.channels, stats, direction)?;
    out.space = space;
    Ok(out)
}

/// `factor × factor` mean pooling over the valid entries of an `h × w` map.
pub fn pool_l2(map: &[f32], h: usize, w: usize, factor: usize) -> Result<Vec<f32>> {
    if map.len() != h * w {
        return Err(Error::Data(format!("map has {} values, expected {h}x{w}", map.len())));
    }
    if factor == 0 || !h.is_multiple_of(factor) || !w.is_multiple_of(factor) {
        return Err(Error::Data(format!("{h}x{w} map is not divisible by pooling factor {factor}")));
    }
    let (ho, wo) = (h / factor, w / factor);
    let mut out = Vec::with_capacity(ho * wo);
    for oy in 0..ho {
        for ox in 0..wo {
            let (mut s, mut n) = (0f64, 0usize);
            for y in oy * factor..(oy + 1) * factor {
                for &v in &map[y * w + ox * factor..y * w + (ox + 1) * factor] {
                    if !v.is_nan() {
                        s += f64::from(v);
                        n += 1;
                    }
                }
            }
            out.push(if n == 0 { f32::NAN } else { (s / n as f64) as f32 });
        }
    }
    Ok(out)
}
