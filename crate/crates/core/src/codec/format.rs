use std::fs;
use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::dataio::bytes::{put_u32, Reader};
use crate::dataio::id_from_path;
use crate::error::{Error, Result};

pub const LATENT_MAGIC: &[u8; 8] = b"HSLAT01\0";
pub const LATENT_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentDtype {
    #[default]
    F32,
    F16,
}

impl LatentDtype {
    pub fn width(self) -> usize {
        match self {
            LatentDtype::F32 => 4,
            LatentDtype::F16 => 2,
        }
    }

    fn code(self) -> u8 {
        match self {
            LatentDtype::F32 => 0,
            LatentDtype::F16 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentContent {
    #[default]
    MeanOnly,
    MeanLogvar,
}

impl LatentContent {
    pub fn multiplier(self) -> usize {
        match self {
            LatentContent::MeanOnly => 1,
            LatentContent::MeanLogvar => 2,
        }
    }

    fn code(self) -> u8 {
        match self {
            LatentContent::MeanOnly => 0,
            LatentContent::MeanLogvar => 1,
        }
    }
}

/// Stored latent of one tile. Values held as `f32`; with the `F16` dtype they
/// are already rounded to binary16, so serialization is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub id: String,
    pub shape: [usize; 3],
    pub dtype: LatentDtype,
    pub mean: Vec<f32>,
    pub logvar: Option<Vec<f32>>,
}

fn quantize(dtype: LatentDtype, v: Vec<f32>) -> Vec<f32> {
    match dtype {
        LatentDtype::F32 => v,
        LatentDtype::F16 => v.into_iter().map(|x| f16::from_f32(x).to_f32()).collect(),
    }
}

impl LatentCode {
    pub fn new(id: impl Into<String>, shape: [usize; 3], dtype: LatentDtype, mean: Vec<f32>, logvar: Option<Vec<f32>>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n == 0 {
            return Err(Error::Data(format!("latent extents must be positive, got {shape:?}")));
        }
        if mean.len() != n || logvar.as_ref().is_some_and(|l| l.len() != n) {
            return Err(Error::Data(format!(
                "latent payload of {} (+{}) values does not match {shape:?}",
                mean.len(),
                logvar.as_ref().map_or(0, Vec::len)
            )));
        }
        Ok(Self {
            id: id.into(),
            shape,
            dtype,
            mean: quantize(dtype, mean),
            logvar: logvar.map(|l| quantize(dtype, l)),
        })
    }

    pub fn content(&self) -> LatentContent {
        if self.logvar.is_some() {
            LatentContent::MeanLogvar
        } else {
            LatentContent::MeanOnly
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product::<usize>() * self.content().multiplier()
    }

    pub fn payload_bytes(&self) -> usize {
        self.numel() * self.dtype.width()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LATENT_HEADER_LEN + self.payload_bytes());
        out.extend_from_slice(LATENT_MAGIC);
        for d in self.shape {
            put_u32(&mut out, d);
        }
        out.push(self.dtype.code());
        out.push(self.content().code());
        out.extend_from_slice(&[0, 0]);
        for v in self.mean.iter().chain(self.logvar.iter().flatten()) {
            match self.dtype {
                LatentDtype::F32 => out.extend_from_slice(&v.to_le_bytes()),
                LatentDtype::F16 => out.extend_from_slice(&f16::from_f32(*v).to_le_bytes()),
            }
        }
        out
    }

    pub fn from_bytes(id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(LATENT_MAGIC)?;
        let shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let fmt_err = |offset: u64, message: String| Error::Format { offset, message };
        let dtype = match r.u8()? {
            0 => LatentDtype::F32,
            1 => LatentDtype::F16,
            d => return Err(fmt_err(20, format!("unknown latent dtype {d}"))),
        };
        let content = match r.u8()? {
            0 => LatentContent::MeanOnly,
            1 => LatentContent::MeanLogvar,
            c => return Err(fmt_err(21, format!("unknown latent content code {c}"))),
        };
        r.skip(2)?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| fmt_err(8, format!("invalid latent extents {shape:?}")))?;
        let mut read = || -> Result<Vec<f32>> {
            match dtype {
                LatentDtype::F32 => r.f32s(n),
                LatentDtype::F16 => Ok(r
                    .take(2 * n, "payload")?
                    .chunks_exact(2)
                    .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f32())
                    .collect()),
            }
        };
        let mean = read()?;
        let logvar = if content == LatentContent::MeanLogvar { Some(read()?) } else { None };
        if r.remaining() != 0 {
            return Err(fmt_err(r.offset(), format!("{} trailing bytes after latent payload", r.remaining())));
        }
        Ok(Self {
            id: id.into(),
            shape,
            dtype,
            mean,
            logvar,
        })
    }
}

pub fn write_latent(code: &LatentCode, path: &Path) -> Result<()> {
    fs::write(path, code.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_latent(path: &Path) -> Result<LatentCode> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LatentCode::from_bytes(id_from_path(path), &bytes)
}
