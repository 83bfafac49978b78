use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Direction;
use crate::error::{Error, Result};

/// Robust-scale constant turning a MAD into a normal-consistent deviation.
pub const MAD_TO_SIGMA: f64 = 1.4826;
pub const LOGIT_EPSILON: f64 = 0.01;
const LOGIT_DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L2Kind {
    Asinh,
    Zscore,
    Logit,
}

impl L2Kind {
    pub fn code(self) -> u8 {
        match self {
            L2Kind::Asinh => 0,
            L2Kind::Zscore => 1,
            L2Kind::Logit => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(L2Kind::Asinh),
            1 => Some(L2Kind::Zscore),
            2 => Some(L2Kind::Logit),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            L2Kind::Asinh => "asinh",
            L2Kind::Zscore => "zscore",
            L2Kind::Logit => "logit",
        }
    }
}

impl fmt::Display for L2Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four Level-2 products, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Product {
    No2,
    O3,
    Hcho,
    Cloud,
}

impl Product {
    pub const ALL: [Product; 4] = [Product::No2, Product::O3, Product::Hcho, Product::Cloud];

    pub fn name(self) -> &'static str {
        match self {
            Product::No2 => "no2",
            Product::O3 => "o3",
            Product::Hcho => "hcho",
            Product::Cloud => "cloud",
        }
    }

    pub fn kind(self) -> L2Kind {
        match self {
            Product::No2 | Product::Hcho => L2Kind::Asinh,
            Product::O3 => L2Kind::Zscore,
            Product::Cloud => L2Kind::Logit,
        }
    }

    /// Divisor that brings raw values to O(1) before the transform.
    pub fn unit_scale(self) -> f64 {
        match self {
            Product::No2 => 1e15,
            Product::Hcho => 1e16,
            Product::O3 | Product::Cloud => 1.0,
        }
    }
}

impl fmt::Display for Product {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Product {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Product::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown product '{s}', expected one of no2, o3, hcho, cloud")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum L2Params {
    Asinh { scale: f64 },
    Zscore { mu: f64, sigma: f64 },
    Logit { epsilon: f64 },
}

impl L2Params {
    pub fn kind(&self) -> L2Kind {
        match self {
            L2Params::Asinh { .. } => L2Kind::Asinh,
            L2Params::Zscore { .. } => L2Kind::Zscore,
            L2Params::Logit { .. } => L2Kind::Logit,
        }
    }
}

/// A fitted per-product transform. Values are divided by `unit_scale`
/// before the kind-specific map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalizer")]
pub struct L2Normalizer {
    pub product: String,
    pub unit_scale: f64,
    #[serde(flatten)]
    pub params: L2Params,
}

#[derive(Deserialize)]
struct RawNormalizer {
    product: String,
    unit_scale: f64,
    #[serde(flatten)]
    params: L2Params,
}

impl TryFrom<RawNormalizer> for L2Normalizer {
    type Error = Error;

    fn try_from(r: RawNormalizer) -> Result<Self> {
        L2Normalizer::new(r.product, r.unit_scale, r.params)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl L2Normalizer {
    pub fn new(product: impl Into<String>, unit_scale: f64, params: L2Params) -> Result<Self> {
        if !(unit_scale > 0.0 && unit_scale.is_finite()) {
            return Err(Error::Config(format!("unit_scale must be positive, got {unit_scale}")));
        }
        match params {
            L2Params::Asinh { scale } if !(scale > 0.0 && scale.is_finite()) => {
                return Err(Error::Config(format!("asinh scale must be positive, got {scale}")))
            }
            L2Params::Zscore { mu, sigma } if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) => {
                return Err(Error::Config(format!("zscore needs finite mu and positive sigma, got {mu}, {sigma}")))
            }
            L2Params::Logit { epsilon } if !(epsilon > 0.0 && epsilon < 0.5) => {
                return Err(Error::Config(format!("logit epsilon must lie in (0, 0.5), got {epsilon}")))
            }
            _ => {}
        }
        Ok(Self {
            product: product.into(),
            unit_scale,
            params,
        })
    }

    pub fn kind(&self) -> L2Kind {
        self.params.kind()
    }

    /// Fit on finite training values (NaNs removed by the caller).
    pub fn fit(product: impl Into<String>, values: &[f32], kind: L2Kind, unit_scale: f64) -> Result<Self> {
        let product = product.into();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{product}: non-finite value {v} passed to the normalizer fit")));
        }
        let x: Vec<f64> = values.iter().map(|&v| f64::from(v) / unit_scale).collect();
        let params = match kind {
            L2Kind::Logit => L2Params::Logit { epsilon: LOGIT_EPSILON },
            _ if x.is_empty() => return Err(Error::Degenerate(format!("{product}: no values to fit"))),
            L2Kind::Asinh => {
                let mut s = x.clone();
                s.sort_by(f64::total_cmp);
                let med = median(&s);
                let mut dev: Vec<f64> = s.iter().map(|v| (v - med).abs()).collect();
                dev.sort_by(f64::total_cmp);
                let mad = median(&dev);
                if mad <= 0.0 {
                    return Err(Error::Degenerate(format!("{product}: median absolute deviation is zero")));
                }
                L2Params::Asinh { scale: MAD_TO_SIGMA * mad }
            }
            L2Kind::Zscore => {
                let n = x.len() as f64;
                let mu = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                if var <= 0.0 {
                    return Err(Error::Degenerate(format!("{product}: standard deviation is zero")));
                }
                L2Params::Zscore { mu, sigma: var.sqrt() }
            }
        };
        Self::new(product, unit_scale, params)
    }

    pub fn forward_value(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Ok(x);
        }
        let u = x / self.unit_scale;
        Ok(match self.params {
            L2Params::Asinh { scale } => (u / scale).asinh(),
            L2Params::Zscore { mu, sigma } => (u - mu) / sigma,
            L2Params::Logit { epsilon } => {
                if !(-LOGIT_DOMAIN_TOL..=1.0 + LOGIT_DOMAIN_TOL).contains(&u) {
                    return Err(Error::Domain(format!("{}: logit input {x} outside [0, 1]", self.product)));
                }
                let q = epsilon + (1.0 - 2.0 * epsilon) * u.clamp(0.0, 1.0);
                (q / (1.0 - q)).ln()
            }
        })
    }

    pub fn inverse_value(&self, y: f64) -> f64 {
        if y.is_nan() {
            return y;
        }
        let u = match self.params {
            L2Params::Asinh { scale } => scale * y.sinh(),
            L2Params::Zscore { mu, sigma } => y * sigma + mu,
            L2Params::Logit { epsilon } => (1.0 / (1.0 + (-y).exp()) - epsilon) / (1.0 - 2.0 * epsilon),
        };
        u * self.unit_scale
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Elementwise transform; NaN stays NaN in both directions.
pub fn transform_l2(x: &[f32], n: &L2Normalizer, direction: Direction) -> Result<Vec<f32>> {
    x.iter()
        .map(|&v| {
            let v = f64::from(v);
            let out = match direction {
                Direction::Forward => n.forward_value(v)?,
                Direction::Inverse => n.inverse_value(v),
            };
            Ok(out as f32)
        })
        .collect()
}

/// Finite entries of a map, for fitting.
pub fn valid_values(map: &[f32]) -> Vec<f32> {
    map.iter().copied().filter(|v| v.is_finite()).collect()
}
