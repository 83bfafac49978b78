use super::kernels::{self, AttentionSaved, AttentionWeights, ConvGeom, GroupNormSaved};
use super::{check_finite_enabled, Scalar, TensorT};
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, batch: usize, cout: usize },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, batch: usize, cin: usize },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize, saved: GroupNormSaved },
    Act { x: Var, kind: Activation },
    Linear { x: Var, w: Var, b: Option<Var> },
    Attention { x: Var, w: [Var; 4], heads: usize, saved: Box<AttentionSaved<T>> },
    Dropout { x: Var, mask: Vec<T> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale { x: Var, c: T },
    AddScalar { x: Var },
    Exp(Var),
    Abs(Var),
    Square(Var),
    Clamp { x: Var, lo: T, hi: T },
    SliceChannels { x: Var, start: usize, len: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    MaskedMse { pred: Var, target: TensorT<T>, count: usize },
}

struct Node<T> {
    value: TensorT<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Operation tape. Nodes are appended in evaluation order, so every input id
/// precedes its consumer and backward walks the tape in reverse.
pub struct GraphT<T> {
    nodes: Vec<Node<T>>,
}

pub type Graph = GraphT<f32>;

impl<T> Default for GraphT<T> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += *v;
            }
        }
        None => *slot = Some(g),
    }
}

impl<T: Scalar> GraphT<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn leaf(&mut self, value: TensorT<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: TensorT<T>) -> Var {
        self.leaf(value, false)
    }

    /// Trainable leaf; gradients accumulate on it across `backward` calls.
    pub fn param(&mut self, value: TensorT<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &TensorT<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a trainable leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, name: &'static str, value: TensorT<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if check_finite_enabled() && !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != sb.len() {
            return Err(Error::dim(op, "rank", sa.len(), sb.len()));
        }
        for (i, (x, y)) in sa.iter().zip(sb).enumerate() {
            if x != y {
                return Err(Error::dim(op, format!("axis {i}"), *x, *y));
            }
        }
        Ok(())
    }

    fn check_bias(&self, op: &'static str, b: Option<Var>, n: usize) -> Result<()> {
        if let Some(b) = b {
            let len = self.value(b).numel();
            if len != n {
                return Err(Error::dim(op, "bias", n, len));
            }
        }
        Ok(())
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let [batch, cin, h, wd] = self.value(x).dims4(OP)?;
        let [cout, wcin, k, k2] = self.value(w).dims4(OP)?;
        if wcin != cin {
            return Err(Error::dim(OP, "input channels", wcin, cin));
        }
        if k2 != k {
            return Err(Error::dim(OP, "kernel width", k, k2));
        }
        self.check_bias(OP, b, cout)?;
        let geom = ConvGeom::new(cin, h, wd, k, stride.max(1), padding).ok_or(Error::dim(OP, "height", k, h + 2 * padding))?;
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be positive".into()));
        }
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            batch,
            &geom,
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            cout,
        );
        let t = TensorT::new(vec![batch, cout, geom.ho, geom.wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(OP, t, Op::Conv2d { x, w, b, geom, batch, cout }, &inputs)
    }

    /// Transposed convolution with zero padding; output extent `(h-1)·stride + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        if stride == 0 {
            return Err(Error::Config("conv_transpose2d stride must be positive".into()));
        }
        let [batch, cin, h, wd] = self.value(x).dims4(OP)?;
        let [wcin, cout, k, k2] = self.value(w).dims4(OP)?;
        if wcin != cin {
            return Err(Error::dim(OP, "input channels", wcin, cin));
        }
        if k2 != k {
            return Err(Error::dim(OP, "kernel width", k, k2));
        }
        self.check_bias(OP, b, cout)?;
        let (ho, wo) = ((h - 1) * stride + k, (wd - 1) * stride + k);
        let geom = ConvGeom::new(cout, ho, wo, k, stride, 0).expect("transposed geometry is always valid");
        debug_assert_eq!((geom.ho, geom.wo), (h, wd));
        let out = kernels::conv_transpose2d_forward(
            self.value(x).data(),
            batch,
            &geom,
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            cin,
        );
        let t = TensorT::new(vec![batch, cout, ho, wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(OP, t, Op::ConvTranspose2d { x, w, b, geom, batch, cin }, &inputs)
    }

    pub fn group_norm(&mut self, x: Var, groups: usize, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        const OP: &str = "group_norm";
        let [batch, c, h, w] = self.value(x).dims4(OP)?;
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!("group_norm: {c} channels not divisible into {groups} groups")));
        }
        if eps <= 0.0 {
            return Err(Error::Config("group_norm eps must be positive".into()));
        }
        for p in [gamma, beta] {
            let n = self.value(p).numel();
            if n != c {
                return Err(Error::dim(OP, "affine", c, n));
            }
        }
        let (y, saved) = kernels::group_norm_forward(
            self.value(x).data(),
            batch,
            c,
            h * w,
            groups,
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        );
        let t = TensorT::new(vec![batch, c, h, w], y)?;
        self.push(OP, t, Op::GroupNorm { x, gamma, beta, groups, saved }, &[x, gamma, beta])
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let src = self.value(x);
        let out = match kind {
            Activation::Gelu => src.data().iter().map(|&v| kernels::gelu(v)).collect(),
            Activation::Relu => src.data().iter().map(|&v| v.max(T::zero())).collect(),
        };
        let t = TensorT::new(src.shape().to_vec(), out)?;
        self.push("activation", t, Op::Act { x, kind }, &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Gelu)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    /// `x · Wᵀ + b` for `x: [n, din]`, `w: [dout, din]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        const OP: &str = "linear";
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        if xs.len() != 2 {
            return Err(Error::dim(OP, "input rank", 2, xs.len()));
        }
        if ws.len() != 2 {
            return Err(Error::dim(OP, "weight rank", 2, ws.len()));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        if ws[1] != din {
            return Err(Error::dim(OP, "inner", din, ws[1]));
        }
        self.check_bias(OP, b, dout)?;
        let mut out = vec![T::zero(); n * dout];
        kernels::gemm(n, din, dout, self.value(x).data(), false, self.value(w).data(), true, &mut out, T::zero());
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(dout) {
                for (o, bv) in row.iter_mut().zip(bias) {
                    *o += *bv;
                }
            }
        }
        let t = TensorT::new(vec![n, dout], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(OP, t, Op::Linear { x, w, b }, &inputs)
    }

    /// Multi-head self-attention over the flattened spatial positions, with
    /// the residual skip included: `x + Wo · attn(x)`.
    pub fn self_attention(&mut self, x: Var, heads: usize, w: [Var; 4]) -> Result<Var> {
        const OP: &str = "self_attention";
        let [batch, c, h, wd] = self.value(x).dims4(OP)?;
        if heads == 0 || c % heads != 0 {
            return Err(Error::Config(format!("self_attention: {c} channels not divisible by {heads} heads")));
        }
        for (i, wv) in w.iter().enumerate() {
            let s = self.value(*wv).shape();
            if s != [c, c] {
                return Err(Error::dim(OP, format!("projection {i}"), c * c, s.iter().product()));
            }
        }
        let wts = AttentionWeights {
            wq: self.value(w[0]).data(),
            wk: self.value(w[1]).data(),
            wv: self.value(w[2]).data(),
            wo: self.value(w[3]).data(),
        };
        let (y, saved) = kernels::attention_forward(self.value(x).data(), batch, c, h * wd, heads, &wts);
        let t = TensorT::new(vec![batch, c, h, wd], y)?;
        let inputs = [x, w[0], w[1], w[2], w[3]];
        self.push(OP, t, Op::Attention { x, w, heads, saved: Box::new(saved) }, &inputs)
    }

    /// Inverted dropout. Identity when `p == 0` or not training.
    pub fn dropout(&mut self, x: Var, p: f32, training: bool, rng: &mut RngState) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - f64::from(p)));
        let src = self.value(x);
        let mask: Vec<T> = (0..src.numel())
            .map(|_| if (rng.uniform() as f32) < p { T::zero() } else { keep })
            .collect();
        let out = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = TensorT::new(src.shape().to_vec(), out)?;
        self.push("dropout", t, Op::Dropout { x, mask }, &[x])
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = TensorT::new(va.shape().to_vec(), out)?;
        self.push(name, t, op, &[a, b])
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let v = self.value(x);
        let out = v.data().iter().map(|&e| f(e)).collect();
        let t = TensorT::new(v.shape().to_vec(), out)?;
        self.push(name, t, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary("scale", x, |v| v * c, Op::Scale { x, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary("add_scalar", x, |v| v + c, Op::AddScalar { x })
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, T::exp, Op::Exp(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary("abs", x, T::abs, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, |v| v * v, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        self.unary("clamp", x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    /// Channels `[start, start + len)` of a 4-D tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        const OP: &str = "slice_channels";
        let [b, c, h, w] = self.value(x).dims4(OP)?;
        if start + len > c {
            return Err(Error::dim(OP, "channel", c, start + len));
        }
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * len * plane);
        for bi in 0..b {
            let base = (bi * c + start) * plane;
            out.extend_from_slice(&src[base..base + len * plane]);
        }
        let t = TensorT::new(vec![b, len, h, w], out)?;
        self.push(OP, t, Op::SliceChannels { x, start, len }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        self.push("reshape", t, Op::Reshape(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = T::of(self.value(x).sum_f64());
        self.push("sum", TensorT::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = T::of(v.sum_f64() / v.numel() as f64);
        self.push("mean", TensorT::scalar(s), Op::Mean(x), &[x])
    }

    /// Mean squared error over the positions where `target` is not NaN.
    /// Zero (with zero gradient) when no target is valid.
    pub fn masked_mse(&mut self, pred: Var, target: TensorT<T>) -> Result<(Var, usize)> {
        let p = self.value(pred);
        if p.numel() != target.numel() {
            return Err(Error::dim("masked_mse", "numel", p.numel(), target.numel()));
        }
        let (mut acc, mut count) = (0f64, 0usize);
        for (&pv, &tv) in p.data().iter().zip(target.data()) {
            if !tv.is_nan() {
                acc += (pv - tv).f64().powi(2);
                count += 1;
            }
        }
        let mse = if count == 0 { 0.0 } else { acc / count as f64 };
        let v = self.push("masked_mse", TensorT::scalar(T::of(mse)), Op::MaskedMse { pred, target, count }, &[pred])?;
        Ok((v, count))
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.value(loss).numel();
        if n != 1 {
            return Err(Error::Usage(format!("backward needs a scalar loss, got {n} elements")));
        }
        self.backward_with(loss, TensorT::scalar(T::one()))
    }

    /// Vector-Jacobian product: propagate `seed` (same shape as `out`) back to
    /// every trainable leaf and add it to their gradients.
    pub fn backward_with(&mut self, out: Var, seed: TensorT<T>) -> Result<()> {
        if seed.numel() != self.value(out).numel() {
            return Err(Error::dim("backward", "seed", self.value(out).numel(), seed.numel()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(seed.into_data());
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                accumulate(&mut self.nodes[i].grad, g);
                continue;
            }
            for (input, dg) in self.local_grads(i, &g) {
                if self.nodes[input.0].requires_grad {
                    accumulate(&mut grads[input.0], dg);
                }
            }
        }
        Ok(())
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, i: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let val = |v: Var| self.value(v).data();
        let elementwise = |x: Var, f: &dyn Fn(T, T) -> T| -> Vec<T> {
            // f(input, upstream)
            val(x).iter().zip(g).map(|(&a, &d)| f(a, d)).collect()
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, geom, batch, cout } => {
                let gr = kernels::conv2d_backward(val(*x), *batch, geom, val(*w), *cout, g, self.rg(*x));
                let mut out = vec![(*w, gr.dw)];
                if let Some(dx) = gr.dx {
                    out.push((*x, dx));
                }
                if let Some(b) = b {
                    out.push((*b, gr.db));
                }
                out
            }
            Op::ConvTranspose2d { x, w, b, geom, batch, cin } => {
                let gr = kernels::conv_transpose2d_backward(val(*x), *batch, geom, val(*w), *cin, g, self.rg(*x));
                let mut out = vec![(*w, gr.dw)];
                if let Some(dx) = gr.dx {
                    out.push((*x, dx));
                }
                if let Some(b) = b {
                    out.push((*b, gr.db));
                }
                out
            }
            Op::GroupNorm { x, gamma, beta, groups, saved } => {
                let [_, c, h, w] = self.value(*x).dims4("group_norm").expect("validated in forward");
                let gr = kernels::group_norm_backward(val(*x), g, c, h * w, *groups, val(*gamma), saved);
                vec![(*x, gr.dx), (*gamma, gr.dgamma), (*beta, gr.dbeta)]
            }
            Op::Act { x, kind } => {
                let d = match kind {
                    Activation::Gelu => elementwise(*x, &|a, d| d * kernels::gelu_grad(a)),
                    Activation::Relu => elementwise(*x, &|a, d| if a > T::zero() { d } else { T::zero() }),
                };
                vec![(*x, d)]
            }
            Op::Linear { x, w, b } => {
                let xs = self.value(*x).shape();
                let (n, din) = (xs[0], xs[1]);
                let dout = self.value(*w).shape()[0];
                let mut out = Vec::new();
                if self.rg(*x) {
                    let mut dx = vec![T::zero(); n * din];
                    kernels::gemm(n, dout, din, g, false, val(*w), false, &mut dx, T::zero());
                    out.push((*x, dx));
                }
                let mut dw = vec![T::zero(); dout * din];
                kernels::gemm(dout, n, din, g, true, val(*x), false, &mut dw, T::zero());
                out.push((*w, dw));
                if let Some(b) = b {
                    let mut db = vec![0f64; dout];
                    for row in g.chunks(dout) {
                        for (a, &v) in db.iter_mut().zip(row) {
                            *a += v.f64();
                        }
                    }
                    out.push((*b, db.into_iter().map(T::of).collect()));
                }
                out
            }
            Op::Attention { x, w, heads, saved } => {
                let [batch, c, h, wd] = self.value(*x).dims4("self_attention").expect("validated in forward");
                let wts = AttentionWeights {
                    wq: val(w[0]),
                    wk: val(w[1]),
                    wv: val(w[2]),
                    wo: val(w[3]),
                };
                let gr = kernels::attention_backward(val(*x), g, batch, c, h * wd, *heads, &wts, saved);
                vec![(*x, gr.dx), (w[0], gr.dwq), (w[1], gr.dwk), (w[2], gr.dwv), (w[3], gr.dwo)]
            }
            Op::Dropout { x, mask } => vec![(*x, g.iter().zip(mask).map(|(&d, &m)| d * m).collect())],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&d| -d).collect())],
            Op::Mul(a, b) => vec![
                (*a, val(*b).iter().zip(g).map(|(&y, &d)| y * d).collect()),
                (*b, val(*a).iter().zip(g).map(|(&x, &d)| x * d).collect()),
            ],
            Op::Scale { x, c } => vec![(*x, g.iter().map(|&d| d * *c).collect())],
            Op::AddScalar { x } => vec![(*x, g.to_vec())],
            Op::Exp(x) => vec![(*x, node.value.data().iter().zip(g).map(|(&e, &d)| e * d).collect())],
            Op::Abs(x) => vec![(*x, elementwise(*x, &|a, d| if a > T::zero() { d } else if a < T::zero() { -d } else { T::zero() }))],
            Op::Square(x) => vec![(*x, elementwise(*x, &|a, d| T::of(2.0) * a * d))],
            Op::Clamp { x, lo, hi } => {
                vec![(*x, elementwise(*x, &|a, d| if a >= *lo && a <= *hi { d } else { T::zero() }))]
            }
            Op::SliceChannels { x, start, len } => {
                let [b, c, h, w] = self.value(*x).dims4("slice_channels").expect("validated in forward");
                let plane = h * w;
                let mut dx = vec![T::zero(); b * c * plane];
                for bi in 0..b {
                    let dst = (bi * c + start) * plane;
                    let src = bi * len * plane;
                    dx[dst..dst + len * plane].copy_from_slice(&g[src..src + len * plane]);
                }
                vec![(*x, dx)]
            }
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::Sum(x) => vec![(*x, vec![g[0]; self.value(*x).numel()])],
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                vec![(*x, vec![g[0] / T::of(n as f64); n])]
            }
            Op::MaskedMse { pred, target, count } => {
                let scale = if *count == 0 { T::zero() } else { T::of(2.0) * g[0] / T::of(*count as f64) };
                let d = val(*pred)
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| if t.is_nan() { T::zero() } else { scale * (p - t) })
                    .collect();
                vec![(*pred, d)]
            }
        }
    }
}
