use std::fs;
use std::path::Path;

use super::bytes::{put_u32, Reader};
use super::tile::id_from_path;
use crate::error::{Error, Result};
use crate::normalize::{L2Kind, Product};

pub const L2_MAGIC: &[u8; 8] = b"HSL2_01\0";

#[derive(Debug, Clone, PartialEq)]
pub struct L2Map {
    pub product: Product,
    pub kind: L2Kind,
    pub data: Vec<f32>,
}

/// Co-registered Level-2 maps for one tile; NaN marks invalid retrievals.
#[derive(Debug, Clone, PartialEq)]
pub struct L2ProductSet {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub maps: Vec<L2Map>,
}

impl L2ProductSet {
    pub fn new(id: impl Into<String>, height: usize, width: usize, maps: Vec<L2Map>) -> Result<Self> {
        for (i, m) in maps.iter().enumerate() {
            if m.data.len() != height * width {
                return Err(Error::Data(format!("{} map has {} values, expected {height}x{width}", m.product, m.data.len())));
            }
            if maps[..i].iter().any(|o| o.product == m.product) {
                return Err(Error::Data(format!("product {} appears twice", m.product)));
            }
            if m.product == Product::Cloud {
                if let Some(v) = m.data.iter().find(|v| !v.is_nan() && !(0.0..=1.0).contains(*v)) {
                    return Err(Error::Data(format!("cloud fraction {v} outside [0, 1]")));
                }
            }
        }
        Ok(Self {
            id: id.into(),
            height,
            width,
            maps,
        })
    }

    pub fn get(&self, p: Product) -> Option<&L2Map> {
        self.maps.iter().find(|m| m.product == p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(L2_MAGIC);
        put_u32(&mut out, self.maps.len());
        put_u32(&mut out, self.height);
        put_u32(&mut out, self.width);
        for m in &self.maps {
            let name = m.product.name().as_bytes();
            out.push(name.len() as u8);
            out.extend_from_slice(name);
            out.push(m.kind.code());
        }
        for m in &self.maps {
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(L2_MAGIC)?;
        let nprod = r.u32()? as usize;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        if nprod > Product::ALL.len() {
            return Err(Error::Format {
                offset: 8,
                message: format!("{nprod} products declared, at most 4 allowed"),
            });
        }
        let mut heads = Vec::with_capacity(nprod);
        for _ in 0..nprod {
            let at = r.offset();
            let len = r.u8()? as usize;
            let name = r.take(len, "product name")?;
            let name = std::str::from_utf8(name).map_err(|_| Error::Format {
                offset: at,
                message: "product name is not UTF-8".into(),
            })?;
            let product: Product = name.parse().map_err(|e: Error| Error::Format {
                offset: at,
                message: e.to_string(),
            })?;
            let kat = r.offset();
            let code = r.u8()?;
            let kind = L2Kind::from_code(code).ok_or_else(|| Error::Format {
                offset: kat,
                message: format!("unknown normalizer code {code}"),
            })?;
            heads.push((product, kind));
        }
        let mut maps = Vec::with_capacity(nprod);
        for (product, kind) in heads {
            maps.push(L2Map {
                product,
                kind,
                data: r.f32s(h * w)?,
            });
        }
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.offset(),
                message: format!("{} trailing bytes after product payloads", r.remaining()),
            });
        }
        Self::new(id, h, w, maps).map_err(|e| Error::Format {
            offset: 8,
            message: e.to_string(),
        })
    }
}

pub fn write_l2(set: &L2ProductSet, path: &Path) -> Result<()> {
    fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_l2(path: &Path) -> Result<L2ProductSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    L2ProductSet::from_bytes(id_from_path(path), &bytes)
}
