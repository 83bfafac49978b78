//! Training loop, optimizer and checkpoints.

mod checkpoint;
mod config;
pub mod data;
mod metrics;
mod optim;

pub use checkpoint::{Checkpoint, LoopState, CKPT_MAGIC, CKPT_VERSION};
pub use config::{DataConfig, TrainConfig};
pub use data::{normalize_tile, Normalization, Sample};
pub use metrics::{read_metrics, Metrics, MetricsLog, MetricsRecord, RunHeader};
pub use optim::{adamw_step, clip_grad_norm, OptimState};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dataio::{split_files, SampleBuffer, TileSource};
use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;
use crate::tensor::Graph;
use crate::vae::{ForwardVars, Vae, VaeConfig};
use data::{collate, fit_normalization, load_sample, SampleCache};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.bin";

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt_step_{step}.bin")
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Precomputed normalization; fitted on the train split when absent.
    pub norm: Option<Normalization>,
    /// Continue from this checkpoint up to `TrainConfig::steps`.
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub step: u64,
    pub final_val: Option<Metrics>,
    pub checkpoints: Vec<PathBuf>,
}

fn head_products(cfg: &VaeConfig) -> Vec<Product> {
    if cfg.supervised {
        cfg.head_products.clone()
    } else {
        Vec::new()
    }
}

/// Per-batch metric sums, reduced to means by [`Accum::finish`].
#[derive(Default)]
struct Accum {
    items: usize,
    rec: f64,
    kl: f64,
    heads: BTreeMap<String, (f64, usize)>,
}

impl Accum {
    fn add(&mut self, g: &Graph, f: &ForwardVars, batch: usize) {
        let b = batch as f64;
        self.items += batch;
        self.rec += f64::from(g.value(f.losses.rec).item()) * b;
        self.kl += f64::from(g.value(f.losses.kl).item()) * b;
        for h in &f.heads {
            let e = self.heads.entry(h.product.name().to_string()).or_default();
            e.0 += f64::from(g.value(h.mse).item()) * h.count as f64;
            e.1 += h.count;
        }
    }

    fn finish(self, log_s2: f64, kl_weight: f64) -> Metrics {
        let n = self.items.max(1) as f64;
        let rec = self.rec / n;
        let kl = self.kl / n;
        let nll = rec * (-log_s2).exp() + log_s2;
        let mut total = nll + kl_weight * kl;
        let mut head_mse = BTreeMap::new();
        let mut empty_heads = Vec::new();
        for (name, (sum, count)) in self.heads {
            let mse = if count == 0 {
                empty_heads.push(name.clone());
                0.0
            } else {
                sum / count as f64
            };
            total += mse;
            head_mse.insert(name, mse);
        }
        Metrics {
            rec,
            nll,
            kl,
            total,
            head_mse,
            empty_heads,
        }
    }
}

fn item_shape(cfg: &VaeConfig) -> [usize; 3] {
    [cfg.in_channels, cfg.tile, cfg.tile]
}

fn target_hw(cfg: &VaeConfig) -> [usize; 2] {
    [cfg.latent_size(), cfg.latent_size()]
}

/// Eval-mode metrics (`z = mu`) averaged over the whole set.
pub fn validate(vae: &Vae, set: &[Sample], batch: usize) -> Result<Metrics> {
    if set.is_empty() {
        return Err(Error::Usage("validation set is empty".into()));
    }
    let cfg = vae.config();
    let mut acc = Accum::default();
    let mut unused = RngState::new(0);
    for chunk in set.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, targets) = collate(&refs, item_shape(cfg), target_hw(cfg))?;
        let mut g = Graph::new();
        let p = vae.bind(&mut g, false);
        let xv = g.input(x);
        let t = cfg.supervised.then_some(targets.as_slice());
        let f = vae.forward(&mut g, &p, xv, t, false, &mut unused)?;
        acc.add(&g, &f, chunk.len());
    }
    Ok(acc.finish(f64::from(vae.log_s2()), cfg.kl_weight))
}

struct Run<'a> {
    source: &'a dyn TileSource,
    vae: Vae,
    optim: OptimState,
    state: LoopState,
    norm: Normalization,
    step: u64,
    products: Vec<Product>,
    train_cfg: TrainConfig,
    data_cfg: DataConfig,
    out: PathBuf,
}

impl Run<'_> {
    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            vae: self.vae.config().clone(),
            train: Some(self.train_cfg.clone()),
            data: Some(self.data_cfg.clone()),
            norm: Some(self.norm.clone()),
            params: self.vae.params().clone(),
            optim: Some(self.optim.clone()),
            state: Some(self.state.clone()),
        }
    }

    fn save(&self, name: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        self.checkpoint().save(&path)?;
        Ok(path)
    }

    fn load(&self, id: &str) -> Result<Sample> {
        load_sample(self.source, id, &self.norm, &self.products, self.data_cfg.pool_factor)
    }

    /// One optimizer step. Returns the logged record.
    fn step_once(&mut self, cache: &mut SampleCache) -> Result<MetricsRecord> {
        let step = self.step + 1;
        let (ids, refresh) = self.state.buffer.sample_batch(self.train_cfg.batch)?;
        let cfg = self.vae.config().clone();
        let samples = ids.iter().map(|id| cache.get(id)).collect::<Result<Vec<_>>>()?;
        let (x, targets) = collate(&samples, item_shape(&cfg), target_hw(&cfg))?;

        let mut g = Graph::new();
        let p = self.vae.bind(&mut g, true);
        let xv = g.input(x);
        let t = cfg.supervised.then_some(targets.as_slice());
        let f = self.vae.forward(&mut g, &p, xv, t, true, &mut self.state.noise)?;
        let objective = g.value(f.objective).item();
        if !objective.is_finite() {
            return Err(Error::TrainingFault {
                step,
                message: format!("non-finite loss {objective}"),
            });
        }
        let mut acc = Accum::default();
        acc.add(&g, &f, ids.len());
        let log_s2 = f64::from(self.vae.log_s2());
        let metrics = acc.finish(log_s2, cfg.kl_weight);

        g.backward(f.objective)?;
        let mut grads: Vec<Vec<f32>> = p
            .iter()
            .map(|&v| g.take_grad(v).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
            .collect();
        drop(g);
        let (clip_scale, grad_norm) = clip_grad_norm(&mut grads, self.train_cfg.clip_norm, step)?;
        adamw_step(&mut self.vae.params_mut().tensors, &grads, &mut self.optim, &self.train_cfg)?;

        if let Some(r) = refresh {
            cache.remove(&r.evicted);
            cache.insert(self.load(&r.loaded)?);
        }
        self.step = step;
        Ok(MetricsRecord::Train {
            step,
            metrics,
            clip_scale,
            grad_norm,
            log_s2,
        })
    }
}

fn fresh_state(source: &dyn TileSource, train_cfg: &TrainConfig, data_cfg: &DataConfig) -> Result<LoopState> {
    let split = split_files(source.ids(), data_cfg.train_pct)?;
    if split.train_ids.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let base = RngState::new(train_cfg.seed);
    let mut val_ids = split.val_ids;
    base.split_named("validation").shuffle(&mut val_ids);
    val_ids.truncate(data_cfg.val_size);
    if val_ids.is_empty() {
        return Err(Error::Usage("validation split is empty".into()));
    }
    let buffer = SampleBuffer::new(split.train_ids.clone(), data_cfg.buffer_capacity, base.split_named("buffer"))?;
    Ok(LoopState {
        buffer,
        noise: base.split_named("noise"),
        train_ids: split.train_ids,
        val_ids,
    })
}

fn write_config(out: &Path, vae: &VaeConfig, train: &TrainConfig, data: &DataConfig) -> Result<()> {
    let v = serde_json::json!({ "vae": vae, "train": train, "data": data });
    let path = out.join(CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&v)?).map_err(|e| Error::io(&path, e))
}

/// Train a VAE on `source`, writing config, metrics and checkpoints under `out`.
///
/// On a non-finite loss or gradient the run stops, the pre-step state is
/// saved as a step checkpoint and the fault is returned.
pub fn train_vae(
    vae_cfg: &VaeConfig,
    train_cfg: &TrainConfig,
    data_cfg: &DataConfig,
    source: &dyn TileSource,
    out: &Path,
    opts: &RunOptions,
) -> Result<RunSummary> {
    vae_cfg.validate()?;
    train_cfg.validate()?;
    data_cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let products = head_products(vae_cfg);
    let mut checkpoints = Vec::new();

    let (mut run, mut log) = match &opts.resume_from {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if &ck.vae != vae_cfg {
                return Err(Error::Config("checkpoint model configuration differs from the requested one".into()));
            }
            let stored = ck.train.clone().unwrap_or_default();
            let same = TrainConfig {
                steps: train_cfg.steps,
                ..stored
            } == *train_cfg;
            if !same || ck.data.as_ref() != Some(data_cfg) {
                return Err(Error::Config("checkpoint training configuration differs (only steps may change)".into()));
            }
            let (Some(optim), Some(state), Some(norm)) = (ck.optim, ck.state, ck.norm) else {
                return Err(Error::Data("checkpoint lacks optimizer or loop state".into()));
            };
            let vae = Vae::from_params(ck.vae, ck.params)?;
            optim.check_against(&vae.params().tensors)?;
            let log = MetricsLog::resume(&out.join(METRICS_FILE), ck.step)?;
            let run = Run {
                source,
                vae,
                optim,
                state,
                norm,
                step: ck.step,
                products: products.clone(),
                train_cfg: train_cfg.clone(),
                data_cfg: data_cfg.clone(),
                out: out.to_path_buf(),
            };
            (run, log)
        }
        None => {
            let state = fresh_state(source, train_cfg, data_cfg)?;
            let norm = match &opts.norm {
                Some(n) => {
                    for &p in &products {
                        n.normalizer(p)?;
                    }
                    n.clone()
                }
                None => fit_normalization(source, &state.train_ids, &products, data_cfg.pool_factor)?,
            };
            let mut init = RngState::new(train_cfg.seed).split_named("init");
            let vae = Vae::new(vae_cfg.clone(), &mut init)?;
            let optim = OptimState::new(&vae.params().tensors);
            write_config(out, vae_cfg, train_cfg, data_cfg)?;
            let header = RunHeader {
                vae: vae_cfg.clone(),
                train: train_cfg.clone(),
                data: data_cfg.clone(),
                n_train: state.train_ids.len(),
                val_ids: state.val_ids.clone(),
            };
            let log = MetricsLog::create(&out.join(METRICS_FILE), header)?;
            let run = Run {
                source,
                vae,
                optim,
                state,
                norm,
                step: 0,
                products: products.clone(),
                train_cfg: train_cfg.clone(),
                data_cfg: data_cfg.clone(),
                out: out.to_path_buf(),
            };
            checkpoints.push(run.save(&checkpoint_name(0))?);
            (run, log)
        }
    };

    let mut cache = SampleCache::default();
    for id in run.state.buffer.slots().to_vec() {
        cache.insert(run.load(&id)?);
    }
    let val_set = run.state.val_ids.iter().map(|id| run.load(id)).collect::<Result<Vec<_>>>()?;

    let mut final_val = None;
    while run.step < train_cfg.steps {
        let before = run.state.clone();
        let rec = match run.step_once(&mut cache) {
            Ok(r) => r,
            Err(e @ Error::TrainingFault { .. }) => {
                run.state = before;
                run.save(&checkpoint_name(run.step))?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        log.append(&rec)?;
        if run.step % train_cfg.val_every == 0 || run.step == train_cfg.steps {
            let m = validate(&run.vae, &val_set, train_cfg.batch)?;
            log::info!("step {} val rec {:.5} total {:.5}", run.step, m.rec, m.total);
            log.append(&MetricsRecord::Val {
                step: run.step,
                metrics: m.clone(),
            })?;
            final_val = Some(m);
        }
        if run.step % train_cfg.ckpt_every == 0 {
            checkpoints.push(run.save(&checkpoint_name(run.step))?);
        }
    }
    checkpoints.push(run.save(FINAL_CHECKPOINT)?);
    Ok(RunSummary {
        out_dir: out.to_path_buf(),
        step: run.step,
        final_val,
        checkpoints,
    })
}

/// Load a trained model and its normalization from a checkpoint file.
pub fn load_model(path: &Path) -> Result<(Vae, Option<Normalization>)> {
    let ck = Checkpoint::load(path)?;
    Ok((Vae::from_params(ck.vae, ck.params)?, ck.norm))
}
