//! Regression probes on frozen latent means.

mod config;
mod dataset;
mod model;
mod suite;

pub use config::{ProbeConfig, ProbeKind};
pub use dataset::{build_probe_dataset, dataset_from_latents, encode_samples, EncodedTile, ProbeDataset};
pub use model::{probe_forward, ProbeModel};
pub use suite::{evaluate_probe_suite, ProbeEntry, ProbeReport, REPORT_FILE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::{Graph, Tensor};
use crate::train::{adamw_step, OptimState, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_test_mse: f64,
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared(pred: &[f32], truth: &[f32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Data(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if truth.len() < 2 {
        return Err(Error::UndefinedMetric(format!("R² needs at least 2 values, got {}", truth.len())));
    }
    let mean = truth.iter().map(|&t| f64::from(t)).sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|&t| (f64::from(t) - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("truth has zero variance".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(&p, &t)| (f64::from(t) - f64::from(p)).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(pred: &[f32], truth: &[f32]) -> f64 {
    let n = truth.len().max(1) as f64;
    pred.iter().zip(truth).map(|(&p, &t)| (f64::from(p) - f64::from(t)).powi(2)).sum::<f64>() / n
}

fn optim_config(cfg: &ProbeConfig) -> TrainConfig {
    TrainConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..TrainConfig::full()
    }
}

/// One shuffled minibatch sweep; returns the mean training MSE.
fn train_epoch(model: &mut ProbeModel, optim: &mut OptimState, ds: &ProbeDataset, cfg: &ProbeConfig, rng: &mut RngState) -> Result<f64> {
    let ocfg = optim_config(cfg);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng.shuffle(&mut order);
    let mut sum = 0f64;
    for idx in order.chunks(cfg.batch) {
        let mut feats = Vec::with_capacity(idx.len() * ds.dim);
        for &i in idx {
            feats.extend_from_slice(ds.row(i));
        }
        let target = Tensor::new([idx.len(), 1], idx.iter().map(|&i| ds.targets[i]).collect())?;
        let mut g = Graph::new();
        let x = g.input(Tensor::new([idx.len(), ds.dim], feats)?);
        let (y, leaves) = model.forward_graph(&mut g, x, true, rng)?;
        let (loss, _) = g.masked_mse(y, target)?;
        sum += f64::from(g.value(loss).item()) * idx.len() as f64;
        g.backward(loss)?;
        let grads: Vec<Vec<f32>> = leaves
            .iter()
            .map(|&v| g.take_grad(v).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
            .collect();
        let mut tensors: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
        adamw_step(&mut tensors, &grads, optim, &ocfg)?;
        for (dst, src) in model.tensors_mut().into_iter().zip(tensors) {
            *dst = src;
        }
    }
    Ok(sum / ds.len() as f64)
}

/// Early-stopping training loop with an injectable validation metric.
///
/// After each epoch `evaluate(model, epoch)` gives the validation loss. The
/// parameters of the strictly best epoch are kept, and training stops once
/// `patience` epochs pass without improvement or at `max_epochs`.
pub fn train_probe_with(
    train: &ProbeDataset,
    cfg: &ProbeConfig,
    rng: &mut RngState,
    mut evaluate: impl FnMut(&ProbeModel, usize) -> Result<f64>,
) -> Result<(ProbeModel, ProbeHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("probe training set is empty".into()));
    }
    let mut model = ProbeModel::new(train.dim, cfg, &mut rng.split_named("init"))?;
    let mut optim = OptimState::new(&model.tensors().into_iter().cloned().collect::<Vec<_>>());
    let mut best = model.clone();
    let mut hist = ProbeHistory {
        best_test_mse: f64::INFINITY,
        ..ProbeHistory::default()
    };
    for epoch in 1..=cfg.max_epochs {
        let train_mse = train_epoch(&mut model, &mut optim, train, cfg, rng)?;
        let test_mse = evaluate(&model, epoch)?;
        hist.epochs.push(EpochRecord { epoch, train_mse, test_mse });
        if test_mse < hist.best_test_mse {
            hist.best_test_mse = test_mse;
            hist.best_epoch = epoch;
            best = model.clone();
        } else if epoch - hist.best_epoch >= cfg.patience {
            break;
        }
    }
    Ok((best, hist))
}

/// Train on `train`, early-stopping on the MSE over `test`.
pub fn train_probe(train: &ProbeDataset, test: &ProbeDataset, cfg: &ProbeConfig, rng: &mut RngState) -> Result<(ProbeModel, ProbeHistory)> {
    if test.is_empty() {
        return Err(Error::Data("probe test set is empty".into()));
    }
    train_probe_with(train, cfg, rng, |m, _| Ok(mse(&m.predict(&test.features)?, &test.targets)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((r_squared(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(r_squared(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(r_squared(&[1.0], &[2.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn early_stop_returns_best_epoch() {
        let mut rng = RngState::new(0);
        let ds = ProbeDataset::from_rows(2, (0..40).map(|i| i as f32 * 0.1).collect(), vec![0.5; 20]).unwrap();
        let cfg = ProbeConfig {
            batch: 8,
            ..ProbeConfig::linear()
        };
        let k = 7;
        let mut snapshots = Vec::new();
        let (best, hist) = train_probe_with(&ds, &cfg, &mut rng, |m, e| {
            snapshots.push(m.clone());
            Ok(((e as f64) - k as f64).powi(2) + 1.0)
        })
        .unwrap();
        assert_eq!(hist.best_epoch, k);
        assert_eq!(hist.epochs.last().unwrap().epoch, k + 10);
        assert_eq!(best, snapshots[k - 1]);
    }
}
