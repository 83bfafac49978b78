use hsnc_core::normalize::Product;
use hsnc_core::probes::{
    build_probe_dataset, evaluate_probe_suite, probe_forward, r_squared, train_probe, ProbeConfig, ProbeDataset, ProbeKind, ProbeModel,
    ProbeReport, REPORT_FILE,
};
use hsnc_core::rng::RngState;
use hsnc_core::tensor::Tensor;
use hsnc_core::train::Sample;
use hsnc_core::vae::{Vae, VaeConfig};
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

fn gaussian_rows(n: usize, dim: usize, rng: &mut RngState) -> Vec<f32> {
    (0..n * dim).map(|_| rng.normal() as f32).collect()
}

fn split(ds: &ProbeDataset, n_train: usize) -> (ProbeDataset, ProbeDataset) {
    let d = ds.dim;
    let a = ProbeDataset::from_rows(d, ds.features[..n_train * d].to_vec(), ds.targets[..n_train].to_vec()).unwrap();
    let b = ProbeDataset::from_rows(d, ds.features[n_train * d..].to_vec(), ds.targets[n_train..].to_vec()).unwrap();
    (a, b)
}

fn planted(n: usize, dim: usize, seed: u64, f: impl Fn(f64) -> f64) -> (ProbeDataset, ProbeDataset) {
    let mut rng = RngState::new(seed);
    let w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let feats = gaussian_rows(n, dim, &mut rng);
    let targets = feats
        .chunks(dim)
        .map(|z| f(z.iter().zip(&w).map(|(&a, b)| f64::from(a) * b).sum::<f64>() / norm) as f32)
        .collect();
    split(&ProbeDataset::from_rows(dim, feats, targets).unwrap(), n * 4 / 5)
}

/// Least-squares R² with intercept on the held-out rows.
fn lstsq_r2(train: &ProbeDataset, test: &ProbeDataset) -> f64 {
    let d = train.dim;
    let design = |ds: &ProbeDataset| DMatrix::from_fn(ds.len(), d + 1, |i, j| if j == d { 1.0 } else { f64::from(ds.row(i)[j]) });
    let y = DVector::from_iterator(train.len(), train.targets.iter().map(|&v| f64::from(v)));
    let coef = design(train).svd(true, true).solve(&y, 1e-12).unwrap();
    let pred: Vec<f32> = (design(test) * coef).iter().map(|&v| v as f32).collect();
    r_squared(&pred, &test.targets).unwrap()
}

#[test]
fn mlp_forward_matches_reference() {
    let cfg = ProbeConfig {
        hidden: vec![16, 12],
        ..ProbeConfig::mlp()
    };
    let m = ProbeModel::new(5, &cfg, &mut RngState::new(4)).unwrap();
    let dense = |w: &Tensor, b: &Tensor, x: &[f64], relu: bool| -> Vec<f64> {
        let [o, i] = [w.shape()[0], w.shape()[1]];
        (0..o)
            .map(|r| {
                let v = f64::from(b.data()[r]) + (0..i).map(|c| f64::from(w.data()[r * i + c]) * x[c]).sum::<f64>();
                if relu { v.max(0.0) } else { v }
            })
            .collect()
    };
    let mut rng = RngState::new(5);
    for _ in 0..20 {
        let z: Vec<f32> = (0..5).map(|_| rng.normal() as f32).collect();
        let mut h: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
        for (k, (w, b)) in m.layers.iter().enumerate() {
            h = dense(w, b, &h, k + 1 < m.layers.len());
        }
        let got = probe_forward(&m, &z, false, &mut rng).unwrap();
        assert!((f64::from(got) - h[0]).abs() < 1e-6, "{got} vs {}", h[0]);
    }
}

#[test]
fn dropout_only_in_training() {
    let m = ProbeModel::new(4, &ProbeConfig::mlp(), &mut RngState::new(6)).unwrap();
    let z = [0.3, -1.0, 2.0, 0.5];
    let a = probe_forward(&m, &z, false, &mut RngState::new(1)).unwrap();
    let b = probe_forward(&m, &z, false, &mut RngState::new(2)).unwrap();
    assert_eq!(a, b);
    let c = probe_forward(&m, &z, true, &mut RngState::new(1)).unwrap();
    let d = probe_forward(&m, &z, true, &mut RngState::new(2)).unwrap();
    assert_ne!(c, d);
}

#[test]
fn linear_probe_recovers_planted_linear_target() {
    let (train, test) = planted(20_000, 8, 1, |u| 1.5 * u + 0.25);
    let oracle = lstsq_r2(&train, &test);
    assert!(oracle > 0.999_999, "least squares R² {oracle}");
    let (model, _) = train_probe(&train, &test, &ProbeConfig::linear(), &mut RngState::new(2)).unwrap();
    let r2 = r_squared(&model.predict(&test.features).unwrap(), &test.targets).unwrap();
    assert!(r2 > 0.999, "linear probe R² {r2}");
}

#[test]
fn mlp_beats_linear_on_planted_sine() {
    let (train, test) = planted(8_000, 8, 3, |u| (3.0 * u).sin());
    let lin = {
        let (m, _) = train_probe(&train, &test, &ProbeConfig::linear(), &mut RngState::new(4)).unwrap();
        r_squared(&m.predict(&test.features).unwrap(), &test.targets).unwrap()
    };
    let cfg = ProbeConfig {
        max_epochs: 200,
        ..ProbeConfig::mlp()
    };
    let (m, _) = train_probe(&train, &test, &cfg, &mut RngState::new(5)).unwrap();
    let mlp = r_squared(&m.predict(&test.features).unwrap(), &test.targets).unwrap();
    assert!(lstsq_r2(&train, &test) < 0.05);
    assert!(mlp - lin >= 0.2, "mlp {mlp} vs linear {lin}");
}

#[test]
fn zero_targets_drive_linear_probe_to_zero() {
    let mut rng = RngState::new(7);
    let ds = ProbeDataset::from_rows(4, gaussian_rows(4000, 4, &mut rng), vec![0.0; 4000]).unwrap();
    let (train, test) = split(&ds, 3200);
    let cfg = ProbeConfig {
        max_epochs: 400,
        ..ProbeConfig::linear()
    };
    let (model, hist) = train_probe(&train, &test, &cfg, &mut rng).unwrap();
    assert!(hist.best_test_mse < 1e-6, "mse {}", hist.best_test_mse);
    let (w, b) = &model.layers[0];
    assert!(w.data().iter().chain(b.data()).all(|v| v.abs() < 1e-2));
}

fn scrambled_tiny(seed: u64) -> Vae {
    let mut rng = RngState::new(seed);
    let mut vae = Vae::new(VaeConfig::tiny(), &mut rng).unwrap();
    for t in vae.params_mut().tensors.iter_mut() {
        let bound = 0.5 / (t.numel().min(64) as f32).sqrt();
        for v in t.data_mut() {
            *v += rng.uniform_range(-f64::from(bound), f64::from(bound)) as f32;
        }
    }
    vae
}

fn samples(vae: &Vae, n: usize, seed: u64) -> Vec<Sample> {
    let cfg = vae.config();
    let [_, h, w] = cfg.latent_shape();
    let mut rng = RngState::new(seed);
    (0..n)
        .map(|i| Sample {
            id: format!("tile_{i:03}"),
            x: (0..cfg.in_channels * cfg.tile * cfg.tile).map(|_| rng.normal() as f32).collect(),
            targets: Product::ALL
                .iter()
                .map(|&p| {
                    let map = (0..h * w).map(|k| if (k + i) % 5 == 0 { f32::NAN } else { rng.normal() as f32 }).collect();
                    (p, map)
                })
                .collect(),
        })
        .collect()
}

fn param_hash(vae: &Vae) -> Vec<u8> {
    let mut h = Sha256::new();
    for t in &vae.params().tensors {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().to_vec()
}

#[test]
fn provenance_matches_reencoded_latents() {
    let vae = scrambled_tiny(8);
    let data = samples(&vae, 6, 9);
    let (train, test) = build_probe_dataset(&vae, &data, Product::O3, &ProbeConfig::linear(), &mut RngState::new(10)).unwrap();
    let [c, h, w] = vae.config().latent_shape();
    let valid: usize = data.iter().map(|s| s.targets[1].1.iter().filter(|v| !v.is_nan()).count()).sum();
    assert_eq!(train.len() + test.len(), valid);
    for ds in [&train, &test] {
        assert_eq!(ds.dim, c);
        assert!(ds.targets.iter().all(|v| !v.is_nan()));
        for (i, (id, y, x)) in ds.provenance.iter().enumerate() {
            let s = data.iter().find(|s| &s.id == id).unwrap();
            let mu = vae.encode(&Tensor::new([1, vae.config().in_channels, 8, 8], s.x.clone()).unwrap()).unwrap().mu;
            let want: Vec<f32> = (0..c).map(|k| mu.data()[(k * h + y) * w + x]).collect();
            assert_eq!(ds.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>(), want.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            assert_eq!(ds.targets[i].to_bits(), s.targets[1].1[y * w + x].to_bits());
        }
    }
}

#[test]
fn suite_reports_every_product_and_kind() {
    let vae = scrambled_tiny(11);
    let data = samples(&vae, 10, 12);
    let before = param_hash(&vae);
    let cfgs: Vec<ProbeConfig> = ProbeKind::ALL
        .iter()
        .map(|&k| ProbeConfig {
            hidden: vec![16, 16],
            max_epochs: 4,
            patience: 2,
            batch: 16,
            ..ProbeConfig::for_kind(k)
        })
        .collect();
    let report = evaluate_probe_suite(&vae, &data, &cfgs, &Product::ALL).unwrap();
    assert_eq!(param_hash(&vae), before);
    assert_eq!(report.entries.len(), 8);
    for p in Product::ALL {
        for k in ProbeKind::ALL {
            let e = report.get(p, k).unwrap();
            assert!(e.r2 <= 1.0 && e.mse >= 0.0);
            assert!(e.best_epoch >= 1 && e.best_epoch <= e.epochs_run);
            assert_eq!(e.n_train + e.n_test, data.iter().map(|s| s.targets[0].1.iter().filter(|v| !v.is_nan()).count()).sum::<usize>());
        }
    }
    let again = evaluate_probe_suite(&vae, &data, &cfgs, &Product::ALL).unwrap();
    assert_eq!(report, again);
    assert_eq!(report.scatter, again.scatter);

    let dir = tempfile::tempdir().unwrap();
    let files = report.write(dir.path()).unwrap();
    assert_eq!(files.len(), 9);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for key in ["product", "kind", "r2", "mse", "n_train", "n_test", "best_epoch"] {
        assert!(rows.iter().all(|r| r.get(key).is_some()), "missing {key}");
    }
    let e = &report.entries[0];
    let csv = std::fs::read_to_string(dir.path().join(ProbeReport::scatter_name(e))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pred,truth"));
    assert_eq!(lines.count(), e.n_test);
}
