use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// AdamW moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl OptimState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| vec![0f32; p.numel()]).collect();
        Self { t: 0, m: zeros(), v: zeros() }
    }

    pub fn check_against(&self, params: &[Tensor]) -> Result<()> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::Data(format!("optimizer holds {} buffers for {} parameters", self.m.len(), params.len())));
        }
        for (i, p) in params.iter().enumerate() {
            if self.m[i].len() != p.numel() || self.v[i].len() != p.numel() {
                return Err(Error::Data(format!("optimizer buffer {i} does not match its parameter")));
            }
        }
        Ok(())
    }
}

/// Rescale all gradients jointly so their global L2 norm is at most
/// `max_norm`. Returns the applied factor and the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [Vec<f32>], max_norm: f64, step: u64) -> Result<(f64, f64)> {
    let sq: f64 = grads.iter().flatten().map(|&g| f64::from(g) * f64::from(g)).sum();
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::TrainingFault {
            step,
            message: "non-finite gradient norm".into(),
        });
    }
    let scale = if norm > max_norm { max_norm / norm } else { 1.0 };
    if scale < 1.0 {
        for g in grads.iter_mut().flatten() {
            *g = (f64::from(*g) * scale) as f32;
        }
    }
    Ok((scale, norm))
}

/// One AdamW update with bias correction and decoupled weight decay on
/// every parameter.
pub fn adamw_step(params: &mut [Tensor], grads: &[Vec<f32>], state: &mut OptimState, cfg: &TrainConfig) -> Result<()> {
    state.check_against(params)?;
    if grads.len() != params.len() {
        return Err(Error::Data(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    state.t += 1;
    let [b1, b2] = cfg.betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != p.numel() {
            return Err(Error::dim("adamw_step", format!("gradient {i}"), p.numel(), g.len()));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            let gj = f64::from(g[j]);
            let mj = b1 * f64::from(m[j]) + (1.0 - b1) * gj;
            let vj = b2 * f64::from(v[j]) + (1.0 - b2) * gj * gj;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let update = (mj / bc1) / ((vj / bc2).sqrt() + cfg.adam_eps) + cfg.weight_decay * f64::from(*theta);
            *theta = (f64::from(*theta) - cfg.lr * update) as f32;
        }
    }
    Ok(())
}
