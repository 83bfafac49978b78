//! Latent archives, compression accounting and reconstruction quality.

mod format;
mod recon;

pub use format::*;
pub use recon::*;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{HyperspectralTile, TileSpace};
use crate::error::{Error, Result};
use crate::normalize::{transform_radiance_slice, Direction, RadianceStats, Z_CLIP};
use crate::tensor::Tensor;
use crate::train::normalize_tile;
use crate::vae::Vae;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodecOptions {
    pub dtype: LatentDtype,
    pub content: LatentContent,
}

/// Normalize, encode in eval mode and store the latent mean (and logvar).
pub fn compress(tile: &HyperspectralTile, stats: &RadianceStats, vae: &Vae, opts: CodecOptions) -> Result<LatentCode> {
    let cfg = vae.config();
    let want = [cfg.in_channels, cfg.tile, cfg.tile];
    if [tile.channels, tile.height, tile.width] != want {
        return Err(Error::Data(format!(
            "tile {} is {}x{}x{}, model expects {}x{}x{}",
            tile.id, tile.channels, tile.height, tile.width, want[0], want[1], want[2]
        )));
    }
    let x = Tensor::new([1, want[0], want[1], want[2]], normalize_tile(tile, stats)?)?;
    let lat = vae.encode(&x)?;
    let logvar = (opts.content == LatentContent::MeanLogvar).then(|| lat.logvar.data().to_vec());
    LatentCode::new(tile.id.clone(), cfg.latent_shape(), opts.dtype, lat.mu.data().to_vec(), logvar)
}

pub fn compress_batch(tiles: &[HyperspectralTile], stats: &RadianceStats, vae: &Vae, opts: CodecOptions) -> Result<Vec<LatentCode>> {
    tiles.par_iter().map(|t| compress(t, stats, vae, opts)).collect()
}

/// Decode the latent mean and map back to raw radiance.
///
/// The decoded normalized values are clamped to the forward transform's range
/// before exponentiation, so the output is always finite and positive.
pub fn decompress(code: &LatentCode, stats: &RadianceStats, vae: &Vae) -> Result<HyperspectralTile> {
    let cfg = vae.config();
    if code.shape != cfg.latent_shape() {
        return Err(Error::Data(format!(
            "latent {} is {:?}, model decodes {:?}",
            code.id,
            code.shape,
            cfg.latent_shape()
        )));
    }
    let [c, h, w] = code.shape;
    let xhat = vae.decode(&Tensor::new([1, c, h, w], code.mean.clone())?)?;
    let mut data: Vec<f32> = xhat.data().iter().map(|v| v.clamp(-Z_CLIP as f32, Z_CLIP as f32)).collect();
    transform_radiance_slice(&mut data, cfg.in_channels, stats, Direction::Inverse)?;
    HyperspectralTile::new(code.id.clone(), cfg.in_channels, cfg.tile, cfg.tile, TileSpace::Raw, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionRatio {
    /// `C·H·W / (c·h·w·k)` with `k = 2` when logvar is stored.
    pub elements: f64,
    /// Raw `f32` bytes over stored payload bytes (header excluded).
    pub bytes: f64,
}

pub fn compression_ratio(in_shape: [usize; 3], code: &LatentCode) -> CompressionRatio {
    let input: usize = in_shape.iter().product();
    CompressionRatio {
        elements: input as f64 / code.numel() as f64,
        bytes: (4 * input) as f64 / code.payload_bytes() as f64,
    }
}
