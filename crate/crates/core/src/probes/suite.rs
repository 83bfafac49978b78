use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dataset_from_latents, encode_samples, mse, r_squared, train_probe, ProbeConfig, ProbeKind};
use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;
use crate::train::Sample;
use crate::vae::Vae;

pub const REPORT_FILE: &str = "probe_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub product: Product,
    pub kind: ProbeKind,
    pub r2: f64,
    pub mse: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub entries: Vec<ProbeEntry>,
    /// `(pred, truth)` over each entry's test set, in entry order.
    #[serde(skip)]
    pub scatter: Vec<Vec<(f32, f32)>>,
}

impl ProbeReport {
    pub fn get(&self, product: Product, kind: ProbeKind) -> Option<&ProbeEntry> {
        self.entries.iter().find(|e| e.product == product && e.kind == kind)
    }

    pub fn scatter_name(e: &ProbeEntry) -> String {
        format!("scatter_{}_{}.csv", e.product, e.kind)
    }

    /// Writes the JSON report and one `pred,truth` CSV per entry.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let path = dir.join(REPORT_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self.entries)?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        for (e, pairs) in self.entries.iter().zip(&self.scatter) {
            let mut csv = String::from("pred,truth\n");
            for (p, t) in pairs {
                let _ = writeln!(csv, "{p},{t}");
            }
            let path = dir.join(Self::scatter_name(e));
            std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Train and score every `(product, kind)` pair on latents of `samples`.
///
/// Each pair draws its pixels and initialization from its own stream derived
/// from the probe seed, product and kind.
pub fn evaluate_probe_suite(vae: &Vae, samples: &[Sample], probe_cfgs: &[ProbeConfig], products: &[Product]) -> Result<ProbeReport> {
    for c in probe_cfgs {
        c.validate()?;
    }
    let tiles = encode_samples(vae, samples)?;
    let jobs: Vec<(Product, &ProbeConfig)> = products.iter().flat_map(|&p| probe_cfgs.iter().map(move |c| (p, c))).collect();
    let results = jobs
        .par_iter()
        .map(|&(product, cfg)| {
            let stream = RngState::new(cfg.seed).split_named(&format!("{product}/{}", cfg.kind));
            let (train, test) = dataset_from_latents(&tiles, product, cfg, &mut stream.split_named("data"))?;
            let (model, hist) = train_probe(&train, &test, cfg, &mut stream.split_named("train"))?;
            let pred = model.predict(&test.features)?;
            let entry = ProbeEntry {
                product,
                kind: cfg.kind,
                r2: r_squared(&pred, &test.targets)?,
                mse: mse(&pred, &test.targets),
                n_train: train.len(),
                n_test: test.len(),
                best_epoch: hist.best_epoch,
                epochs_run: hist.epochs.len(),
            };
            log::info!("probe {product}/{}: R² {:.4} after {} epochs", cfg.kind, entry.r2, entry.epochs_run);
            Ok((entry, pred.into_iter().zip(test.targets.iter().copied()).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (entries, scatter) = results.into_iter().unzip();
    Ok(ProbeReport { entries, scatter })
}
