use std::path::Path;

use hsnc_core::dataio::{SynthConfig, SynthSource, TileSource};
use hsnc_core::rng::RngState;
use hsnc_core::train::data::{fit_normalization, load_sample};
use hsnc_core::train::{
    checkpoint_name, read_metrics, train_vae, validate, Checkpoint, DataConfig, MetricsRecord, RunOptions, TrainConfig,
    FINAL_CHECKPOINT, METRICS_FILE,
};
use hsnc_core::vae::{Vae, VaeConfig};
use hsnc_core::Error;

fn source() -> SynthSource {
    let cfg = SynthConfig {
        channels: 8,
        tile: 8,
        ..SynthConfig::default()
    };
    SynthSource::new(cfg, 40, 5).unwrap()
}

fn vae_cfg(supervised: bool) -> VaeConfig {
    VaeConfig {
        in_channels: 8,
        supervised,
        ..VaeConfig::tiny()
    }
}

fn train_cfg(steps: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch: 4,
        val_every: 2,
        ckpt_every: 3,
        lr: 1e-3,
        ..TrainConfig::desk()
    }
}

fn data_cfg() -> DataConfig {
    DataConfig {
        val_size: 6,
        buffer_capacity: 10,
        ..DataConfig::default()
    }
}

fn run(dir: &Path, steps: u64, supervised: bool) -> hsnc_core::train::RunSummary {
    train_vae(&vae_cfg(supervised), &train_cfg(steps), &data_cfg(), &source(), dir, &RunOptions::default()).unwrap()
}

#[test]
fn zero_steps_writes_initial_checkpoint_only() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(dir.path(), 0, false);
    assert_eq!(s.step, 0);
    assert!(dir.path().join(checkpoint_name(0)).exists());
    assert!(dir.path().join(FINAL_CHECKPOINT).exists());
    assert!(dir.path().join("config.json").exists());
    let recs = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(matches!(recs[0], MetricsRecord::Header(_)));
}

#[test]
fn seeded_runs_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path(), 5, true);
    run(b.path(), 5, true);
    let ma = std::fs::read(a.path().join(METRICS_FILE)).unwrap();
    let mb = std::fs::read(b.path().join(METRICS_FILE)).unwrap();
    assert_eq!(ma, mb);
    let fa = std::fs::read(a.path().join(FINAL_CHECKPOINT)).unwrap();
    let fb = std::fs::read(b.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn resume_matches_straight_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path(), 7, true);
    run(b.path(), 3, true);
    let opts = RunOptions {
        resume_from: Some(b.path().join(checkpoint_name(3))),
        ..RunOptions::default()
    };
    train_vae(&vae_cfg(true), &train_cfg(7), &data_cfg(), &source(), b.path(), &opts).unwrap();
    let after = |d: &Path| -> Vec<MetricsRecord> {
        read_metrics(&d.join(METRICS_FILE))
            .unwrap()
            .into_iter()
            .filter(|r| r.step().is_some_and(|s| s > 3))
            .collect()
    };
    let (ra, rb) = (after(a.path()), after(b.path()));
    assert_eq!(ra.len(), 4 + 3);
    assert_eq!(ra, rb);
    let fa = Checkpoint::load(&a.path().join(FINAL_CHECKPOINT)).unwrap();
    let fb = Checkpoint::load(&b.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn resume_rejects_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), 3, false);
    let opts = RunOptions {
        resume_from: Some(dir.path().join(checkpoint_name(3))),
        ..RunOptions::default()
    };
    let mut t = train_cfg(6);
    t.lr = 0.5;
    let r = train_vae(&vae_cfg(false), &t, &data_cfg(), &source(), dir.path(), &opts);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn logged_total_is_sum_of_terms() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), 4, true);
    let w = vae_cfg(true).kl_weight;
    let recs = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    let mut n = 0;
    for r in recs {
        let (m, ls) = match r {
            MetricsRecord::Train { metrics, log_s2, .. } => (metrics, Some(log_s2)),
            MetricsRecord::Val { metrics, .. } => (metrics, None),
            MetricsRecord::Header(_) => continue,
        };
        let heads: f64 = m.head_mse.values().sum();
        assert_eq!(m.head_mse.len(), 4);
        assert!((m.total - (m.nll + w * m.kl + heads)).abs() < 1e-6);
        if let Some(ls) = ls {
            assert!((m.nll - (m.rec * (-ls).exp() + ls)).abs() < 1e-9);
        }
        n += 1;
    }
    assert_eq!(n, 4 + 2);
}

#[test]
fn validation_set_properties() {
    let src = source();
    let ids = src.ids().to_vec();
    let norm = fit_normalization(&src, &ids[..20], &[], 4).unwrap();
    let vae = Vae::new(vae_cfg(false), &mut RngState::new(1)).unwrap();
    let a = load_sample(&src, &ids[30], &norm, &[], 4).unwrap();
    let b = load_sample(&src, &ids[31], &norm, &[], 4).unwrap();

    let fresh = validate(&vae, &[a.clone(), b.clone()], 4).unwrap();
    let mean_abs = a.x.iter().chain(&b.x).map(|v| f64::from(v.abs())).sum::<f64>() / (2 * a.x.len()) as f64;
    assert!((fresh.rec - mean_abs).abs() < 1e-6);

    let single = validate(&vae, std::slice::from_ref(&a), 4).unwrap();
    let twice = validate(&vae, &[a.clone(), a.clone()], 4).unwrap();
    assert!((single.rec - twice.rec).abs() < 1e-12 && (single.total - twice.total).abs() < 1e-12);
    assert_eq!(validate(&vae, &[a.clone(), b.clone()], 4).unwrap(), fresh);
    assert!(matches!(validate(&vae, &[], 4), Err(Error::Usage(_))));
}

#[test]
fn divergence_aborts_and_keeps_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let t = TrainConfig {
        lr: 1e30,
        ..train_cfg(10)
    };
    let r = train_vae(&vae_cfg(false), &t, &data_cfg(), &source(), dir.path(), &RunOptions::default());
    let Err(Error::TrainingFault { step, .. }) = r else {
        panic!("expected a training fault, got {r:?}");
    };
    let last = Checkpoint::load(&dir.path().join(checkpoint_name(step - 1))).unwrap();
    assert_eq!(last.step, step - 1);
    assert!(last.params.tensors.iter().all(|t| t.is_finite()));
    assert!(!dir.path().join(FINAL_CHECKPOINT).exists());
}
