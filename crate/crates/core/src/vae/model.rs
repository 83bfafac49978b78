use super::params::{Conv, DecoderLayout, EncoderLayout, Layout, Middle, Norm, ResBlock};
use super::VaeConfig;
use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;
use crate::tensor::{GraphT, Scalar, TensorT, Var};

/// Encoder output on a graph: mean and clamped log-variance.
#[derive(Debug, Clone, Copy)]
pub struct LatentVars {
    pub mu: Var,
    pub logvar: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub rec: Var,
    pub nll: Var,
    pub kl: Var,
    pub total: Var,
}

/// Loss values of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub rec: f64,
    pub nll: f64,
    pub kl: f64,
    pub total: f64,
}

/// Per-product supervised head result.
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub product: Product,
    pub pred: Var,
    pub mse: Var,
    /// Number of valid (non-NaN) target pixels; zero means the head was skipped.
    pub count: usize,
}

pub(crate) struct Net<'a> {
    pub cfg: &'a VaeConfig,
    pub layout: &'a Layout,
    pub p: &'a [Var],
}

impl<'a> Net<'a> {
    fn conv<T: Scalar>(&self, g: &mut GraphT<T>, x: Var, c: &Conv) -> Result<Var> {
        g.conv2d(x, self.p[c.w], Some(self.p[c.b]), c.stride, c.pad)
    }

    fn norm<T: Scalar>(&self, g: &mut GraphT<T>, x: Var, n: &Norm) -> Result<Var> {
        g.group_norm(x, self.cfg.groups, self.p[n.gamma], self.p[n.beta], self.cfg.gn_eps)
    }

    fn res_block<T: Scalar>(&self, g: &mut GraphT<T>, x: Var, rb: &ResBlock) -> Result<Var> {
        let h = self.norm(g, x, &rb.norm1)?;
        let h = g.gelu(h)?;
        let h = self.conv(g, h, &rb.conv1)?;
        let h = self.norm(g, h, &rb.norm2)?;
        let h = g.gelu(h)?;
        let h = self.conv(g, h, &rb.conv2)?;
        let skip = match &rb.skip {
            Some(s) => self.conv(g, x, s)?,
            None => x,
        };
        g.add(skip, h)
    }

    fn middle<T: Scalar>(&self, g: &mut GraphT<T>, x: Var, m: &Middle) -> Result<Var> {
        let h = self.res_block(g, x, &m.rb1)?;
        let h = g.self_attention(h, self.cfg.attn_heads, m.attn.map(|i| self.p[i]))?;
        self.res_block(g, h, &m.rb2)
    }

    pub fn encode<T: Scalar>(&self, g: &mut GraphT<T>, x: Var) -> Result<LatentVars> {
        let cfg = self.cfg;
        let [_, c, h, w] = g.value(x).dims4("encode")?;
        if c != cfg.in_channels {
            return Err(Error::dim("encode", "channels", cfg.in_channels, c));
        }
        if h != cfg.tile || w != cfg.tile {
            return Err(Error::dim("encode", "spatial", cfg.tile, if h != cfg.tile { h } else { w }));
        }
        let e: &EncoderLayout = &self.layout.encoder;
        let mut h = self.conv(g, x, &e.conv_in)?;
        for (rb, down) in &e.levels {
            h = self.res_block(g, h, rb)?;
            if let Some(d) = down {
                h = self.conv(g, h, d)?;
            }
        }
        h = self.middle(g, h, &e.middle)?;
        let out = self.conv(g, h, &e.conv_out)?;
        let lc = cfg.latent_channels;
        let mu = g.slice_channels(out, 0, lc)?;
        let lv = g.slice_channels(out, lc, lc)?;
        let [lo, hi] = cfg.logvar_clamp;
        let logvar = g.clamp(lv, T::of(f64::from(lo)), T::of(f64::from(hi)))?;
        Ok(LatentVars { mu, logvar })
    }

    pub fn decode<T: Scalar>(&self, g: &mut GraphT<T>, z: Var) -> Result<Var> {
        let cfg = self.cfg;
        let [_, c, h, w] = g.value(z).dims4("decode")?;
        let [lc, ls, _] = cfg.latent_shape();
        if c != lc {
            return Err(Error::dim("decode", "channels", lc, c));
        }
        if h != ls || w != ls {
            return Err(Error::dim("decode", "spatial", ls, if h != ls { h } else { w }));
        }
        let d: &DecoderLayout = &self.layout.decoder;
        let mut h = self.conv(g, z, &d.conv_in)?;
        h = self.middle(g, h, &d.middle)?;
        for (rb, up) in &d.levels {
            h = self.res_block(g, h, rb)?;
            h = g.conv_transpose2d(h, self.p[up.w], Some(self.p[up.b]), up.stride)?;
        }
        h = self.res_block(g, h, &d.final_rb)?;
        self.conv(g, h, &d.conv_out)
    }

    /// `z = mu + exp(logvar / 2) · ε`; returns `mu` itself when not sampling.
    pub fn reparameterize<T: Scalar>(&self, g: &mut GraphT<T>, lat: LatentVars, sample: bool, rng: &mut RngState) -> Result<Var> {
        if !sample {
            return Ok(lat.mu);
        }
        let shape = g.value(lat.mu).shape().to_vec();
        let eps = g.input(TensorT::randn(shape, rng));
        let half = g.scale(lat.logvar, T::of(0.5))?;
        let std = g.exp(half)?;
        let noise = g.mul(std, eps)?;
        g.add(lat.mu, noise)
    }

    pub fn losses<T: Scalar>(&self, g: &mut GraphT<T>, x: Var, xhat: Var, lat: LatentVars) -> Result<LossVars> {
        let diff = g.sub(x, xhat)?;
        let ad = g.abs(diff)?;
        let rec = g.mean(ad)?;
        let ls = self.p[self.layout.log_s2];
        let neg = g.scale(ls, -T::one())?;
        let inv = g.exp(neg)?;
        let scaled = g.mul(rec, inv)?;
        let nll = g.add(scaled, ls)?;
        let kl = kl_graph(g, lat)?;
        let wkl = g.scale(kl, T::of(self.cfg.kl_weight))?;
        let total = g.add(nll, wkl)?;
        Ok(LossVars { rec, nll, kl, total })
    }

    /// 1×1 conv heads on `mu` with masked MSE against NaN-marked targets.
    pub fn heads<T: Scalar>(&self, g: &mut GraphT<T>, mu: Var, targets: &[(Product, TensorT<T>)]) -> Result<Vec<HeadOutput>> {
        let [b, _, h, w] = g.value(mu).dims4("supervised_forward")?;
        let mut out = Vec::with_capacity(self.layout.heads.len());
        for (product, conv) in &self.layout.heads {
            let Some((_, target)) = targets.iter().find(|(p, _)| p == product) else {
                return Err(Error::Data(format!("no target supplied for head {product}")));
            };
            if target.shape() != [b, 1, h, w] {
                return Err(Error::Data(format!(
                    "{product} target shape {:?} does not match latent resolution [{b}, 1, {h}, {w}]",
                    target.shape()
                )));
            }
            let pred = self.conv(g, mu, conv)?;
            let (mse, count) = g.masked_mse(pred, target.clone())?;
            out.push(HeadOutput {
                product: *product,
                pred,
                mse,
                count,
            });
        }
        Ok(out)
    }
}

/// `mean_batch( 0.5 · Σ_dims (mu² + exp(logvar) − 1 − logvar) )`.
pub fn kl_graph<T: Scalar>(g: &mut GraphT<T>, lat: LatentVars) -> Result<Var> {
    let batch = g.value(lat.mu).shape()[0];
    let m2 = g.square(lat.mu)?;
    let ev = g.exp(lat.logvar)?;
    let s = g.add(m2, ev)?;
    let s = g.sub(s, lat.logvar)?;
    let s = g.add_scalar(s, -T::one())?;
    let s = g.sum(s)?;
    g.scale(s, T::of(0.5 / batch as f64))
}
