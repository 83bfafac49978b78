//! Flattens run directories into CSV tables and one JSON bundle.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hsnc_core::codec::SUMMARY_FILE;
use hsnc_core::probes::{ProbeEntry, REPORT_FILE};
use hsnc_core::train::{read_metrics, Metrics, MetricsRecord, METRICS_FILE};
use hsnc_core::{Error, Result};
use serde::Serialize;
use serde_json::Value;

pub const BUNDLE_FILE: &str = "bundle.json";
pub const PROBES_CSV: &str = "probes.csv";

#[derive(Debug, Serialize)]
struct RunBundle {
    name: String,
    dir: PathBuf,
    train_records: usize,
    val_records: usize,
    final_train: Option<Metrics>,
    final_val: Option<Metrics>,
    probes: Vec<ProbeEntry>,
    recon: Option<Value>,
}

pub fn run_name(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn metrics_csv(rows: &[(u64, &Metrics, Option<[f64; 3]>)]) -> String {
    let heads: BTreeSet<&String> = rows.iter().flat_map(|(_, m, _)| m.head_mse.keys()).collect();
    let extra = rows.iter().any(|r| r.2.is_some());
    let mut s = String::from("step,rec,nll,kl,total");
    if extra {
        s.push_str(",clip_scale,grad_norm,log_s2");
    }
    for h in &heads {
        let _ = write!(s, ",mse_{h}");
    }
    s.push('\n');
    for (step, m, x) in rows {
        let _ = write!(s, "{step},{},{},{},{}", m.rec, m.nll, m.kl, m.total);
        if let Some([a, b, c]) = x {
            let _ = write!(s, ",{a},{b},{c}");
        }
        for h in &heads {
            match m.head_mse.get(*h) {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

fn put(path: PathBuf, text: String, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

pub fn merge(runs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut bundles = Vec::new();
    let mut probe_csv = String::from("run,product,kind,r2,mse,n_train,n_test,best_epoch\n");
    for dir in runs {
        if !dir.is_dir() {
            return Err(Error::Data(format!("{} is not a run directory", dir.display())));
        }
        let name = run_name(dir);
        let mut b = RunBundle {
            name: name.clone(),
            dir: dir.clone(),
            train_records: 0,
            val_records: 0,
            final_train: None,
            final_val: None,
            probes: Vec::new(),
            recon: None,
        };
        let mp = dir.join(METRICS_FILE);
        if mp.exists() {
            let recs = read_metrics(&mp)?;
            let mut train = Vec::new();
            let mut val = Vec::new();
            for r in &recs {
                match r {
                    MetricsRecord::Train {
                        step,
                        metrics,
                        clip_scale,
                        grad_norm,
                        log_s2,
                    } => train.push((*step, metrics, Some([*clip_scale, *grad_norm, *log_s2]))),
                    MetricsRecord::Val { step, metrics } => val.push((*step, metrics, None)),
                    MetricsRecord::Header(_) => {}
                }
            }
            b.train_records = train.len();
            b.val_records = val.len();
            b.final_train = train.last().map(|r| r.1.clone());
            b.final_val = val.last().map(|r| r.1.clone());
            put(out.join(format!("{name}_train.csv")), metrics_csv(&train), &mut written)?;
            put(out.join(format!("{name}_val.csv")), metrics_csv(&val), &mut written)?;
        }
        let pp = dir.join(REPORT_FILE);
        if pp.exists() {
            let text = std::fs::read_to_string(&pp).map_err(|e| Error::io(&pp, e))?;
            b.probes = serde_json::from_str(&text)?;
            for e in &b.probes {
                let _ = writeln!(
                    probe_csv,
                    "{name},{},{},{},{},{},{},{}",
                    e.product, e.kind, e.r2, e.mse, e.n_train, e.n_test, e.best_epoch
                );
            }
        }
        let sp = dir.join(SUMMARY_FILE);
        if sp.exists() {
            let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
            b.recon = Some(serde_json::from_str(&text)?);
        }
        bundles.push(b);
    }
    put(out.join(PROBES_CSV), probe_csv, &mut written)?;
    put(out.join(BUNDLE_FILE), serde_json::to_string_pretty(&bundles)?, &mut written)?;
    Ok(written)
}
