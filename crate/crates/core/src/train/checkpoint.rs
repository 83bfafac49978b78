//! `HSCKPT01` checkpoint container.
//!
//! Layout: magic (8 bytes) | u32 header length | UTF-8 JSON header | f32 LE
//! blobs. Blobs hold every parameter tensor in header order, then the first
//! and second optimizer moments in the same order when optimizer state is
//! present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::Normalization;
use super::{DataConfig, OptimState, TrainConfig};
use crate::dataio::bytes::{put_u32, Reader};
use crate::dataio::SampleBuffer;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::vae::{VaeConfig, VaeParams};

pub const CKPT_MAGIC: &[u8; 8] = b"HSCKPT01";
pub const CKPT_VERSION: u32 = 1;

/// Everything the training loop needs to continue bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub buffer: SampleBuffer,
    pub noise: RngState,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub vae: VaeConfig,
    pub train: Option<TrainConfig>,
    pub data: Option<DataConfig>,
    pub norm: Option<Normalization>,
    pub params: VaeParams,
    pub optim: Option<OptimState>,
    pub state: Option<LoopState>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    step: u64,
    vae: VaeConfig,
    train: Option<TrainConfig>,
    data: Option<DataConfig>,
    norm: Option<Normalization>,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    optim_t: Option<u64>,
    state: Option<LoopState>,
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    out.reserve(v.len() * 4);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: CKPT_VERSION,
            step: self.step,
            vae: self.vae.clone(),
            train: self.train.clone(),
            data: self.data.clone(),
            norm: self.norm.clone(),
            names: self.params.names.clone(),
            shapes: self.params.tensors.iter().map(|t| t.shape().to_vec()).collect(),
            optim_t: self.optim.as_ref().map(|o| o.t),
            state: self.state.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + json.len() + 12 * self.params.numel());
        out.extend_from_slice(CKPT_MAGIC);
        put_u32(&mut out, json.len());
        out.extend_from_slice(&json);
        for t in &self.params.tensors {
            put_f32s(&mut out, t.data());
        }
        if let Some(o) = &self.optim {
            for b in o.m.iter().chain(&o.v) {
                put_f32s(&mut out, b);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CKPT_MAGIC)?;
        let len = r.u32()? as usize;
        let at = r.offset();
        let header: Header = serde_json::from_slice(r.take(len, "header")?).map_err(|e| Error::Format {
            offset: at,
            message: format!("bad checkpoint header: {e}"),
        })?;
        if header.version != CKPT_VERSION {
            return Err(Error::Format {
                offset: at,
                message: format!("unsupported checkpoint version {}", header.version),
            });
        }
        if header.names.len() != header.shapes.len() {
            return Err(Error::Format {
                offset: at,
                message: "parameter names and shapes differ in length".into(),
            });
        }
        let mut tensors = Vec::with_capacity(header.shapes.len());
        for shape in &header.shapes {
            let n = shape.iter().product();
            tensors.push(Tensor::new(shape.clone(), r.f32s(n)?)?);
        }
        let optim = match header.optim_t {
            Some(t) => {
                let mut read = || header.shapes.iter().map(|s| r.f32s(s.iter().product())).collect::<Result<Vec<_>>>();
                let m = read()?;
                let v = read()?;
                Some(OptimState { t, m, v })
            }
            None => None,
        };
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.offset(),
                message: format!("{} trailing bytes after checkpoint payload", r.remaining()),
            });
        }
        let params = VaeParams {
            names: header.names,
            tensors,
        };
        params.check_against(&header.vae)?;
        Ok(Self {
            step: header.step,
            vae: header.vae,
            train: header.train,
            data: header.data,
            norm: header.norm,
            params,
            optim,
            state: header.state,
        })
    }

    /// Written to a temporary sibling first, then renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("bin.tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
