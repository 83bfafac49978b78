use serde::{Deserialize, Serialize};

use super::VaeConfig;
use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    FanIn(usize),
    Zeros,
    Ones,
    Const(f32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub w: usize,
    pub b: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Norm {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResBlock {
    pub norm1: Norm,
    pub conv1: Conv,
    pub norm2: Norm,
    pub conv2: Conv,
    pub skip: Option<Conv>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Middle {
    pub rb1: ResBlock,
    pub attn: [usize; 4],
    pub rb2: ResBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderLayout {
    pub conv_in: Conv,
    pub levels: Vec<(ResBlock, Option<Conv>)>,
    pub middle: Middle,
    pub conv_out: Conv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderLayout {
    pub conv_in: Conv,
    pub middle: Middle,
    pub levels: Vec<(ResBlock, Conv)>,
    pub final_rb: ResBlock,
    pub conv_out: Conv,
}

/// Where every parameter of a model lives in [`VaeParams::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub encoder: EncoderLayout,
    pub decoder: DecoderLayout,
    pub log_s2: usize,
    pub heads: Vec<(Product, Conv)>,
}

#[derive(Default)]
struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, zero: bool) -> Conv {
        let init = if zero { Init::Zeros } else { Init::FanIn(cin * k * k) };
        let w = self.add(format!("{name}.weight"), vec![cout, cin, k, k], init);
        let b = self.add(format!("{name}.bias"), vec![cout], init);
        Conv { w, b, k, stride, pad }
    }

    /// Transposed conv weights are `[cin, cout, k, k]`; fan-in follows dim 1.
    fn conv_t(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        let init = Init::FanIn(cout * k * k);
        let w = self.add(format!("{name}.weight"), vec![cin, cout, k, k], init);
        let b = self.add(format!("{name}.bias"), vec![cout], init);
        Conv { w, b, k, stride: k, pad: 0 }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        let gamma = self.add(format!("{name}.gamma"), vec![c], Init::Ones);
        let beta = self.add(format!("{name}.beta"), vec![c], Init::Zeros);
        Norm { gamma, beta }
    }

    fn res_block(&mut self, name: &str, cin: usize, cout: usize) -> ResBlock {
        ResBlock {
            norm1: self.norm(&format!("{name}.norm1"), cin),
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3, 1, 1, false),
            norm2: self.norm(&format!("{name}.norm2"), cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, 1, 1, true),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1, 1, 0, false)),
        }
    }

    fn middle(&mut self, name: &str, c: usize) -> Middle {
        let rb1 = self.res_block(&format!("{name}.rb1"), c, c);
        let attn = ["q", "k", "v", "o"].map(|p| self.add(format!("{name}.attn.w{p}"), vec![c, c], Init::FanIn(c)));
        let rb2 = self.res_block(&format!("{name}.rb2"), c, c);
        Middle { rb1, attn, rb2 }
    }
}

fn build(cfg: &VaeConfig) -> (Layout, Builder) {
    let mut b = Builder::default();
    let ch = &cfg.enc_channels;
    let last = ch[cfg.n_down];

    let conv_in = b.conv("enc.conv_in", cfg.in_channels, ch[0], 3, 1, 1, false);
    let mut levels = Vec::with_capacity(ch.len());
    let mut prev = ch[0];
    for (i, &c) in ch.iter().enumerate() {
        let rb = b.res_block(&format!("enc.level{i}.rb"), prev, c);
        let down = (i < cfg.n_down).then(|| b.conv(&format!("enc.level{i}.down"), c, c, 2, 2, 0, false));
        levels.push((rb, down));
        prev = c;
    }
    let middle = b.middle("enc.mid", last);
    let conv_out = b.conv("enc.conv_out", last, 2 * cfg.latent_channels, 3, 1, 1, true);
    let encoder = EncoderLayout {
        conv_in,
        levels,
        middle,
        conv_out,
    };

    let rev: Vec<usize> = ch.iter().rev().copied().collect();
    let dconv_in = b.conv("dec.conv_in", cfg.latent_channels, rev[0], 3, 1, 1, false);
    let dmiddle = b.middle("dec.mid", rev[0]);
    let mut dlevels = Vec::with_capacity(cfg.n_down);
    for j in 0..cfg.n_down {
        let rb = b.res_block(&format!("dec.level{j}.rb"), rev[j], rev[j]);
        let up = b.conv_t(&format!("dec.level{j}.up"), rev[j], rev[j + 1], 2);
        dlevels.push((rb, up));
    }
    let fin = rev[cfg.n_down];
    let final_rb = b.res_block("dec.final.rb", fin, fin);
    let dconv_out = b.conv("dec.conv_out", fin, cfg.in_channels, 3, 1, 1, true);
    let decoder = DecoderLayout {
        conv_in: dconv_in,
        middle: dmiddle,
        levels: dlevels,
        final_rb,
        conv_out: dconv_out,
    };

    let log_s2 = b.add("log_s2".into(), vec![1], Init::Const(cfg.log_s2_init));
    let heads = if cfg.supervised {
        cfg.head_products
            .iter()
            .map(|&p| (p, b.conv(&format!("head.{p}"), cfg.latent_channels, 1, 1, 1, 0, false)))
            .collect()
    } else {
        Vec::new()
    };
    (
        Layout {
            encoder,
            decoder,
            log_s2,
            heads,
        },
        b,
    )
}

impl Layout {
    pub fn new(cfg: &VaeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(build(cfg).0)
    }
}

/// Named parameter tensors in a fixed, configuration-determined order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl VaeParams {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    /// Shapes and names must match `cfg` exactly.
    pub fn check_against(&self, cfg: &VaeConfig) -> Result<()> {
        let (_, b) = build(cfg);
        if b.names != self.names {
            return Err(Error::Data("parameter names do not match the model configuration".into()));
        }
        for ((name, shape), t) in b.names.iter().zip(&b.shapes).zip(&self.tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Data(format!("parameter {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }
}

pub fn init_params(cfg: &VaeConfig, rng: &mut RngState) -> Result<(Layout, VaeParams)> {
    cfg.validate()?;
    let (layout, b) = build(cfg);
    let tensors = b
        .shapes
        .iter()
        .zip(&b.inits)
        .map(|(shape, init)| match *init {
            Init::FanIn(fan) => {
                let bound = 1.0 / (fan as f32).sqrt();
                Tensor::uniform(shape.clone(), -bound, bound, rng)
            }
            Init::Zeros => Tensor::zeros(shape.clone()),
            Init::Ones => Tensor::ones(shape.clone()),
            Init::Const(v) => Tensor::full(shape.clone(), v),
        })
        .collect();
    Ok((layout, VaeParams { names: b.names, tensors }))
}

fn conv_count(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

fn rb_count(cin: usize, cout: usize) -> usize {
    let skip = if cin != cout { conv_count(cin, cout, 1) } else { 0 };
    2 * cin + conv_count(cin, cout, 3) + 2 * cout + conv_count(cout, cout, 3) + skip
}

fn middle_count(c: usize) -> usize {
    2 * rb_count(c, c) + 4 * c * c
}

/// Closed-form parameter count, computed without building the model.
pub fn count_params(cfg: &VaeConfig) -> Result<usize> {
    cfg.validate()?;
    let ch = &cfg.enc_channels;
    let last = ch[cfg.n_down];
    let mut n = conv_count(cfg.in_channels, ch[0], 3);
    let mut prev = ch[0];
    for (i, &c) in ch.iter().enumerate() {
        n += rb_count(prev, c);
        if i < cfg.n_down {
            n += conv_count(c, c, 2);
        }
        prev = c;
    }
    n += middle_count(last) + conv_count(last, 2 * cfg.latent_channels, 3);

    n += conv_count(cfg.latent_channels, last, 3) + middle_count(last);
    for j in 0..cfg.n_down {
        let (a, b) = (ch[cfg.n_down - j], ch[cfg.n_down - j - 1]);
        n += rb_count(a, a) + b * a * 4 + b;
    }
    n += rb_count(ch[0], ch[0]) + conv_count(ch[0], cfg.in_channels, 3);
    n += 1;
    if cfg.supervised {
        n += cfg.head_products.len() * (cfg.latent_channels + 1);
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_count_paths_agree() {
        for mut cfg in [VaeConfig::tiny(), VaeConfig::desk(), VaeConfig::full()] {
            for sup in [false, true] {
                cfg.supervised = sup;
                let (_, b) = build(&cfg);
                let built: usize = b.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
                assert_eq!(built, count_params(&cfg).unwrap());
            }
        }
    }

    #[test]
    fn zero_init_sites_are_zero() {
        let cfg = VaeConfig::tiny();
        let (layout, p) = init_params(&cfg, &mut RngState::new(1)).unwrap();
        let zero = |i: usize| p.tensors[i].data().iter().all(|v| *v == 0.0);
        assert!(zero(layout.encoder.conv_out.w) && zero(layout.encoder.conv_out.b));
        assert!(zero(layout.decoder.conv_out.w) && zero(layout.decoder.conv_out.b));
        for (rb, _) in &layout.encoder.levels {
            assert!(zero(rb.conv2.w));
        }
        assert!(!zero(layout.encoder.conv_in.w));
        assert_eq!(p.tensors[layout.log_s2].data(), &[0.0]);
    }

    #[test]
    fn fan_in_bounds_and_determinism() {
        let cfg = VaeConfig::tiny();
        let (l, a) = init_params(&cfg, &mut RngState::new(5)).unwrap();
        let (_, b) = init_params(&cfg, &mut RngState::new(5)).unwrap();
        assert_eq!(a, b);
        let w = &a.tensors[l.encoder.conv_in.w];
        let bound = 1.0 / ((4 * 9) as f32).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        a.check_against(&cfg).unwrap();
    }

    #[test]
    fn linear_only_count() {
        // A 1×1 conv is a per-pixel linear map: Din·Dout + Dout.
        assert_eq!(conv_count(7, 3, 1), 7 * 3 + 3);
    }
}
