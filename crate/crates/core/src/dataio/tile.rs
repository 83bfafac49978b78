use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bytes::{put_u32, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TILE_MAGIC: &[u8; 8] = b"HSTILE01";
pub const TILE_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileSpace {
    Raw,
    Normalized,
}

impl TileSpace {
    fn code(self) -> u8 {
        match self {
            TileSpace::Raw => 0,
            TileSpace::Normalized => 1,
        }
    }
}

/// One `[C, H, W]` hyperspectral cube, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralTile {
    pub id: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub space: TileSpace,
    pub data: Vec<f32>,
}

impl HyperspectralTile {
    pub fn new(id: impl Into<String>, channels: usize, height: usize, width: usize, space: TileSpace, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Data(format!("tile extents must be positive, got {channels}x{height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Data(format!(
                "tile payload has {} values, expected {}",
                data.len(),
                channels * height * width
            )));
        }
        Ok(Self {
            id: id.into(),
            channels,
            height,
            width,
            space,
            data,
        })
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }

    /// Spectrum of pixel `p` (row-major index into the plane).
    pub fn spectrum(&self, p: usize) -> Vec<f32> {
        let plane = self.plane();
        (0..self.channels).map(|c| self.data[c * plane + p]).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.channels, self.height, self.width], self.data.clone()).expect("extents validated at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TILE_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(TILE_MAGIC);
        put_u32(&mut out, self.channels);
        put_u32(&mut out, self.height);
        put_u32(&mut out, self.width);
        out.push(0);
        out.push(self.space.code());
        out.extend_from_slice(&[0, 0]);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(TILE_MAGIC)?;
        let c = r.u32()? as usize;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let dtype_at = r.offset();
        let dtype = r.u8()?;
        if dtype != 0 {
            return Err(Error::Format {
                offset: dtype_at,
                message: format!("tile dtype {dtype} unsupported, only 0 (f32)"),
            });
        }
        let space_at = r.offset();
        let space = match r.u8()? {
            0 => TileSpace::Raw,
            1 => TileSpace::Normalized,
            s => {
                return Err(Error::Format {
                    offset: space_at,
                    message: format!("unknown tile space code {s}"),
                })
            }
        };
        r.skip(2)?;
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::Format {
                offset: 8,
                message: "tile extents overflow".into(),
            })?;
        let data = r.f32s(n)?;
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.offset(),
                message: format!("{} trailing bytes after tile payload", r.remaining()),
            });
        }
        Self::new(id, c, h, w, space, data).map_err(|e| Error::Format {
            offset: 8,
            message: e.to_string(),
        })
    }
}

/// Id derived from a path: the file stem.
pub fn id_from_path(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn write_tile(tile: &HyperspectralTile, path: &Path) -> Result<()> {
    fs::write(path, tile.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tile(path: &Path) -> Result<HyperspectralTile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    HyperspectralTile::from_bytes(id_from_path(path), &bytes)
}
