use std::path::Path;

use hsnc_core::codec::{LatentContent, LatentDtype};
use hsnc_core::dataio::SynthConfig;
use hsnc_core::normalize::Product;
use hsnc_core::probes::{ProbeConfig, ProbeKind};
use hsnc_core::train::{DataConfig, TrainConfig};
use hsnc_core::vae::VaeConfig;
use hsnc_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthCommand {
    pub seed: u64,
    pub count: usize,
    pub synth: SynthConfig,
}

impl Default for SynthCommand {
    fn default() -> Self {
        Self {
            seed: 42,
            count: 2000,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsCommand {
    pub products: Vec<Product>,
    pub pool_factor: usize,
    /// Train share used when no explicit file list is given.
    pub train_pct: u32,
}

impl Default for StatsCommand {
    fn default() -> Self {
        let d = DataConfig::default();
        Self {
            products: Product::ALL.to_vec(),
            pool_factor: d.pool_factor,
            train_pct: d.train_pct,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCommand {
    pub vae: VaeConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CodecCommand {
    pub dtype: LatentDtype,
    pub content: LatentContent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeCommand {
    pub products: Vec<Product>,
    pub kinds: Vec<ProbeKind>,
    pub linear: ProbeConfig,
    pub mlp: ProbeConfig,
}

impl Default for ProbeCommand {
    fn default() -> Self {
        Self {
            products: Product::ALL.to_vec(),
            kinds: ProbeKind::ALL.to_vec(),
            linear: ProbeConfig::linear(),
            mlp: ProbeConfig::mlp(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportCommand {}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Overlay the JSON file at `path` onto `base`, field by field.
pub fn layered<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(base);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let over: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut merged = serde_json::to_value(base)?;
    merge(&mut merged, over);
    serde_json::from_value(merged).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| {
            s.trim().parse::<T>().map_err(|e| match e {
                Error::Usage(m) | Error::Data(m) => Error::Usage(m),
                other => Error::Usage(other.to_string()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_is_deep() {
        let mut a = json!({"x": 1, "n": {"a": 1, "b": 2}});
        merge(&mut a, json!({"n": {"b": 3}, "y": [1]}));
        assert_eq!(a, json!({"x": 1, "n": {"a": 1, "b": 3}, "y": [1]}));
    }

    #[test]
    fn unknown_product_is_usage() {
        assert!(matches!(parse_list::<Product>(&["no2".into(), "co2".into()]), Err(Error::Usage(_))));
    }
}
