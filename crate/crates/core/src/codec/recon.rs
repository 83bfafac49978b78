use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::HyperspectralTile;
use crate::error::{Error, Result};
use crate::normalize::RadianceStats;
use crate::train::normalize_tile;

pub const RMSE_FILE: &str = "rmse_per_channel.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMse {
    pub tile: String,
    pub height: usize,
    pub width: usize,
    /// Row-major normalized-space MSE, averaged over channels.
    pub mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub channels: usize,
    pub n_tiles: usize,
    pub rmse_normalized: Vec<f64>,
    pub rmse_physical: Vec<f64>,
    /// Mean and population std of the original radiance per channel.
    pub mean_spectrum: Vec<f64>,
    pub std_spectrum: Vec<f64>,
    pub recon_mean_spectrum: Vec<f64>,
    pub pixel_mse: Vec<PixelMse>,
    pub compression_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Summary {
    channels: usize,
    n_tiles: usize,
    rmse_normalized_overall: f64,
    rmse_physical_overall: f64,
    mean_rmse_normalized: f64,
    max_rmse_normalized: f64,
    mean_signal: f64,
    compression_ratio: Option<f64>,
    tile_mse: Vec<(String, f64)>,
}

fn rms_of(sq: &[f64]) -> f64 {
    (sq.iter().sum::<f64>() / sq.len().max(1) as f64).sqrt()
}

/// Compare raw-space originals with raw-space reconstructions, tile by tile.
pub fn eval_reconstruction(orig: &[HyperspectralTile], recon: &[HyperspectralTile], stats: &RadianceStats) -> Result<ReconReport> {
    if orig.len() != recon.len() || orig.is_empty() {
        return Err(Error::Data(format!("{} originals vs {} reconstructions", orig.len(), recon.len())));
    }
    let channels = orig[0].channels;
    let mut sq_norm = vec![0f64; channels];
    let mut sq_phys = vec![0f64; channels];
    let mut sum = vec![0f64; channels];
    let mut sum2 = vec![0f64; channels];
    let mut rsum = vec![0f64; channels];
    let mut count = 0usize;
    let mut pixel_mse = Vec::with_capacity(orig.len());
    for (a, b) in orig.iter().zip(recon) {
        let dims = |t: &HyperspectralTile| [t.channels, t.height, t.width];
        if dims(a) != dims(b) || a.channels != channels {
            return Err(Error::Data(format!("tile {} is {:?} but its reconstruction is {:?}", a.id, dims(a), dims(b))));
        }
        let (na, nb) = (normalize_tile(a, stats)?, normalize_tile(b, stats)?);
        let plane = a.plane();
        let mut pix = vec![0f64; plane];
        for c in 0..channels {
            let r = c * plane..(c + 1) * plane;
            for (p, ((&x, &y), (&u, &v))) in na[r.clone()].iter().zip(&nb[r.clone()]).zip(a.data[r.clone()].iter().zip(&b.data[r])).enumerate() {
                let d = f64::from(x) - f64::from(y);
                sq_norm[c] += d * d;
                pix[p] += d * d / channels as f64;
                let (u, v) = (f64::from(u), f64::from(v));
                sq_phys[c] += (u - v).powi(2);
                sum[c] += u;
                sum2[c] += u * u;
                rsum[c] += v;
            }
        }
        count += plane;
        pixel_mse.push(PixelMse {
            tile: a.id.clone(),
            height: a.height,
            width: a.width,
            mse: pix,
        });
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    Ok(ReconReport {
        channels,
        n_tiles: orig.len(),
        rmse_normalized: sq_norm.iter().map(|s| (s / n).sqrt()).collect(),
        rmse_physical: sq_phys.iter().map(|s| (s / n).sqrt()).collect(),
        std_spectrum: sum2.iter().zip(&mean).map(|(s2, m)| (s2 / n - m * m).max(0.0).sqrt()).collect(),
        mean_spectrum: mean,
        recon_mean_spectrum: rsum.iter().map(|s| s / n).collect(),
        pixel_mse,
        compression_ratio: None,
    })
}

impl ReconReport {
    pub fn pixel_file(tile: &str) -> String {
        format!("pixel_mse_{tile}.csv")
    }

    /// Per-channel CSV, one `H × W` grid CSV per tile and a JSON summary.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| -> Result<PathBuf> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        };
        let mut csv = String::from("channel,rmse_normalized,rmse_physical,mean_radiance,std_radiance,recon_mean_radiance\n");
        for c in 0..self.channels {
            let _ = writeln!(
                csv,
                "{c},{},{},{},{},{}",
                self.rmse_normalized[c], self.rmse_physical[c], self.mean_spectrum[c], self.std_spectrum[c], self.recon_mean_spectrum[c]
            );
        }
        let mut written = vec![put(RMSE_FILE, csv)?];
        for pm in &self.pixel_mse {
            let mut grid = String::new();
            for row in pm.mse.chunks(pm.width) {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                grid.push_str(&cells.join(","));
                grid.push('\n');
            }
            written.push(put(&Self::pixel_file(&pm.tile), grid)?);
        }
        let sq: Vec<f64> = self.rmse_normalized.iter().map(|r| r * r).collect();
        let sqp: Vec<f64> = self.rmse_physical.iter().map(|r| r * r).collect();
        let summary = Summary {
            channels: self.channels,
            n_tiles: self.n_tiles,
            rmse_normalized_overall: rms_of(&sq),
            rmse_physical_overall: rms_of(&sqp),
            mean_rmse_normalized: self.rmse_normalized.iter().sum::<f64>() / self.channels as f64,
            max_rmse_normalized: self.rmse_normalized.iter().copied().fold(0.0, f64::max),
            mean_signal: self.mean_spectrum.iter().sum::<f64>() / self.channels as f64,
            compression_ratio: self.compression_ratio,
            tile_mse: self
                .pixel_mse
                .iter()
                .map(|p| (p.tile.clone(), p.mse.iter().sum::<f64>() / p.mse.len() as f64))
                .collect(),
        };
        written.push(put(SUMMARY_FILE, serde_json::to_string_pretty(&summary)?)?);
        Ok(written)
    }
}
