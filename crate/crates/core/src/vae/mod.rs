//! Convolutional VAE over normalized radiance tiles.

mod config;
mod model;
mod params;

pub use config::VaeConfig;
pub use model::{kl_graph, HeadOutput, LatentVars, LossVars, Losses};
pub use params::{count_params, init_params, Conv, DecoderLayout, EncoderLayout, Layout, Middle, Norm, ResBlock, VaeParams};

use model::Net;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;
use crate::tensor::{Graph, GraphT, Scalar, Tensor, TensorT, Var};

/// Diagonal Gaussian posterior over the latent grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLatent {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub lat: LatentVars,
    pub z: Var,
    pub xhat: Var,
    pub losses: LossVars,
    pub heads: Vec<HeadOutput>,
    /// `losses.total` plus every head MSE with weight 1.
    pub objective: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    cfg: VaeConfig,
    layout: Layout,
    params: VaeParams,
}

impl Vae {
    pub fn new(cfg: VaeConfig, rng: &mut RngState) -> Result<Self> {
        let (layout, params) = init_params(&cfg, rng)?;
        Ok(Self { cfg, layout, params })
    }

    pub fn from_params(cfg: VaeConfig, params: VaeParams) -> Result<Self> {
        let layout = Layout::new(&cfg)?;
        params.check_against(&cfg)?;
        Ok(Self { cfg, layout, params })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &VaeParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut VaeParams {
        &mut self.params
    }

    pub fn into_params(self) -> VaeParams {
        self.params
    }

    pub fn log_s2(&self) -> f32 {
        self.params.tensors[self.layout.log_s2].item()
    }

    /// Place every parameter on `g`, trainable or constant.
    pub fn bind<T: Scalar>(&self, g: &mut GraphT<T>, trainable: bool) -> Vec<Var> {
        self.params
            .tensors
            .iter()
            .map(|t| {
                let v = t.cast::<T>();
                if trainable {
                    g.param(v)
                } else {
                    g.input(v)
                }
            })
            .collect()
    }

    fn net<'a>(&'a self, p: &'a [Var]) -> Net<'a> {
        Net {
            cfg: &self.cfg,
            layout: &self.layout,
            p,
        }
    }

    pub fn encode_graph<T: Scalar>(&self, g: &mut GraphT<T>, p: &[Var], x: Var) -> Result<LatentVars> {
        self.net(p).encode(g, x)
    }

    pub fn decode_graph<T: Scalar>(&self, g: &mut GraphT<T>, p: &[Var], z: Var) -> Result<Var> {
        self.net(p).decode(g, z)
    }

    /// Full training forward pass on normalized input `x`.
    ///
    /// `sample = false` is eval mode (`z = mu`). Head targets are required
    /// for every configured head when the model is supervised.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut GraphT<T>,
        p: &[Var],
        x: Var,
        targets: Option<&[(Product, TensorT<T>)]>,
        sample: bool,
        rng: &mut RngState,
    ) -> Result<ForwardVars> {
        let net = self.net(p);
        let lat = net.encode(g, x)?;
        let z = net.reparameterize(g, lat, sample, rng)?;
        let xhat = net.decode(g, z)?;
        let losses = net.losses(g, x, xhat, lat)?;
        let mut objective = losses.total;
        let heads = match (self.cfg.supervised, targets) {
            (true, Some(t)) => net.heads(g, lat.mu, t)?,
            (true, None) => return Err(Error::Usage("supervised model needs L2 targets".into())),
            (false, _) => Vec::new(),
        };
        for h in &heads {
            objective = g.add(objective, h.mse)?;
        }
        Ok(ForwardVars {
            lat,
            z,
            xhat,
            losses,
            heads,
            objective,
        })
    }

    /// Eval-mode encoding of a `[B, C, H, W]` batch.
    pub fn encode(&self, x: &Tensor) -> Result<GaussianLatent> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.input(x.clone());
        let lat = self.encode_graph(&mut g, &p, xv)?;
        Ok(GaussianLatent {
            mu: g.value(lat.mu).clone(),
            logvar: g.value(lat.logvar).clone(),
        })
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let zv = g.input(z.clone());
        let out = self.decode_graph(&mut g, &p, zv)?;
        Ok(g.value(out).clone())
    }

    /// Per-product head predictions `[B, 1, h, w]` from the latent mean.
    pub fn supervised_forward(&self, lat: &GaussianLatent) -> Result<Vec<(Product, Tensor)>> {
        if !self.cfg.supervised {
            return Err(Error::Usage("model has no supervision heads".into()));
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let mu = g.input(lat.mu.clone());
        let [b, _, h, w] = lat.mu.dims4("supervised_forward")?;
        let targets: Vec<_> = self
            .layout
            .heads
            .iter()
            .map(|(pr, _)| (*pr, Tensor::full([b, 1, h, w], f32::NAN)))
            .collect();
        let out = self.net(&p).heads(&mut g, mu, &targets)?;
        Ok(out.into_iter().map(|o| (o.product, g.value(o.pred).clone())).collect())
    }
}

/// `z = mu + exp(logvar / 2) · ε` with fresh `ε ~ N(0, 1)`.
pub fn reparameterize(lat: &GaussianLatent, rng: &mut RngState) -> Result<Tensor> {
    if lat.mu.shape() != lat.logvar.shape() {
        return Err(Error::Data("mu and logvar shapes differ".into()));
    }
    let eps = Tensor::randn(lat.mu.shape().to_vec(), rng);
    let data = lat
        .mu
        .data()
        .iter()
        .zip(lat.logvar.data())
        .zip(eps.data())
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(lat.mu.shape().to_vec(), data)
}

/// Loss terms evaluated directly on tensors.
pub fn compute_losses(x: &Tensor, xhat: &Tensor, lat: &GaussianLatent, log_s2: f64, cfg: &VaeConfig) -> Result<Losses> {
    if x.shape() != xhat.shape() {
        return Err(Error::Data(format!("x {:?} and xhat {:?} differ in shape", x.shape(), xhat.shape())));
    }
    if lat.mu.shape() != lat.logvar.shape() || lat.mu.shape().is_empty() {
        return Err(Error::Data("mu and logvar shapes differ".into()));
    }
    let rec = x.data().iter().zip(xhat.data()).map(|(a, b)| f64::from((a - b).abs())).sum::<f64>() / x.numel() as f64;
    let nll = rec / log_s2.exp() + log_s2;
    let kl = kl_divergence(lat);
    Ok(Losses {
        rec,
        nll,
        kl,
        total: nll + cfg.kl_weight * kl,
    })
}

/// `−0.5 · Σ (1 + logvar − mu² − exp(logvar))`, averaged over the batch.
pub fn kl_divergence(lat: &GaussianLatent) -> f64 {
    let batch = lat.mu.shape().first().copied().unwrap_or(1).max(1);
    let s: f64 = lat
        .mu
        .data()
        .iter()
        .zip(lat.logvar.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (f64::from(m), f64::from(lv));
            m * m + lv.exp() - 1.0 - lv
        })
        .sum();
    0.5 * s / batch as f64
}
