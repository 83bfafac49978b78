use serde::{Deserialize, Serialize};

use super::{ProbeConfig, ProbeKind};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::{Graph, Tensor, Var};

/// Linear or MLP regressor from one latent vector to one scalar.
///
/// `layers` holds `(weight [out, in], bias [out])` pairs; a linear probe has
/// exactly one. Every layer but the last is followed by ReLU, and dropout
/// follows the last hidden activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub kind: ProbeKind,
    pub dropout: f32,
    pub layers: Vec<(Tensor, Tensor)>,
}

impl ProbeModel {
    pub fn new(input_dim: usize, cfg: &ProbeConfig, rng: &mut RngState) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("probe input dimension must be positive".into()));
        }
        let mut widths = vec![input_dim];
        if cfg.kind == ProbeKind::Mlp {
            widths.extend(&cfg.hidden);
        }
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f32).sqrt();
                (
                    Tensor::uniform([w[1], w[0]], -bound, bound, rng),
                    Tensor::uniform([w[1]], -bound, bound, rng),
                )
            })
            .collect();
        Ok(Self {
            kind: cfg.kind,
            dropout: if cfg.kind == ProbeKind::Mlp { cfg.dropout } else { 0.0 },
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.shape()[1]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.numel() + b.numel()).sum()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    /// Graph forward on `x: [n, input_dim]`; returns `[n, 1]` predictions and
    /// the parameter leaves in `tensors()` order.
    pub fn forward_graph(&self, g: &mut Graph, x: Var, training: bool, rng: &mut RngState) -> Result<(Var, Vec<Var>)> {
        let mut leaves = Vec::with_capacity(2 * self.layers.len());
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = (g.param(w.clone()), g.param(b.clone()));
            leaves.extend([wv, bv]);
            h = g.linear(h, wv, Some(bv))?;
            if i < last {
                h = g.relu(h)?;
                if i + 1 == last {
                    h = g.dropout(h, self.dropout, training, rng)?;
                }
            }
        }
        Ok((h, leaves))
    }

    /// Eval-mode predictions for `n` row-major feature vectors.
    pub fn predict(&self, features: &[f32]) -> Result<Vec<f32>> {
        let d = self.input_dim();
        if !features.len().is_multiple_of(d) {
            return Err(Error::dim("probe_forward", "features", d, features.len() % d));
        }
        let mut out = Vec::with_capacity(features.len() / d);
        for chunk in features.chunks(4096 * d) {
            let mut g = Graph::new();
            let x = g.input(Tensor::new([chunk.len() / d, d], chunk.to_vec())?);
            let (y, _) = self.forward_graph(&mut g, x, false, &mut RngState::new(0))?;
            out.extend_from_slice(g.value(y).data());
        }
        Ok(out)
    }
}

/// Single-vector forward; dropout is active only when `training`.
pub fn probe_forward(model: &ProbeModel, z: &[f32], training: bool, rng: &mut RngState) -> Result<f32> {
    let mut g = Graph::new();
    let x = g.input(Tensor::new([1, z.len()], z.to_vec())?);
    let (y, _) = model.forward_graph(&mut g, x, training, rng)?;
    Ok(g.value(y).item())
}
