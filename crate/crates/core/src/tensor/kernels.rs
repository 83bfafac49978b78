//! Slice-level numeric kernels behind the graph ops.
//!
//! Batch-parallel kernels split work over samples only; every reduction that
//! crosses samples (weight gradients, bias gradients) runs sequentially in
//! sample order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::Scalar;

/// `c = op(a) * op(b) + beta * c` with `op(a)` of shape `[m, k]` and `op(b)` of
/// shape `[k, n]`. `ta`/`tb` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], beta: T) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice length asserts above bound every index gemm touches.
    unsafe {
        T::gemm_raw(m, k, n, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize);
    }
}

/// Geometry of a cross-correlation from an image `[channels, h, w]` onto an
/// output grid `[ho, wo]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || k == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return None;
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Some(Self {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            ho,
            wo,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    pub fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `[lo, hi)` whose input column `ox * stride + kj − pad` lies
/// inside `0..w`.
fn valid_cols(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride);
    let hi = if g.w + g.pad > kj { (g.w + g.pad - kj - 1) / g.stride + 1 } else { 0 };
    let hi = hi.min(g.wo);
    (lo.min(hi), hi)
}

pub fn im2col<T: Scalar>(img: &[T], g: &ConvGeom, col: &mut [T]) {
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                let (lo, hi) = valid_cols(g, kj);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize || lo == hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let first = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (v, &x) in line[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *v = x;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of `col` back onto the image grid; adjoint of [`im2col`].
pub fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, img: &mut [T]) {
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                let (lo, hi) = valid_cols(g, kj);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let from = &src[oy * g.wo + lo..oy * g.wo + hi];
                    if g.stride == 1 {
                        for (d, &v) in line[first..first + hi - lo].iter_mut().zip(from) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in line[first..].iter_mut().step_by(g.stride).zip(from) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[c % bias.len()];
        for v in chunk {
            *v += b;
        }
    }
}

fn channel_bias_grad<T: Scalar>(dy: &[T], channels: usize, plane: usize, db: &mut [T]) {
    let mut acc = vec![0f64; channels];
    for (i, chunk) in dy.chunks(plane).enumerate() {
        acc[i % channels] += chunk.iter().map(|&v| v.f64()).sum::<f64>();
    }
    for (d, a) in db.iter_mut().zip(acc) {
        *d += T::of(a);
    }
}

/// Forward cross-correlation. `x: [b, cin, h, w]`, `w: [cout, cin, k, k]`.
pub fn conv2d_forward<T: Scalar>(x: &[T], batch: usize, g: &ConvGeom, weight: &[T], bias: Option<&[T]>, cout: usize) -> Vec<T> {
    let in_per = g.channels * g.h * g.w;
    let out_per = cout * g.col_cols();
    let mut out = vec![T::zero(); batch * out_per];
    // Column buffers are reused across samples; every entry is rewritten before use.
    let col_len = if g.is_pointwise() { 0 } else { g.col_rows() * g.col_cols() };
    out.par_chunks_mut(out_per).enumerate().for_each_init(|| vec![T::zero(); col_len], |col, (b, ob)| {
        let xb = &x[b * in_per..(b + 1) * in_per];
        if g.is_pointwise() {
            gemm(cout, g.channels, g.col_cols(), weight, false, xb, false, ob, T::zero());
        } else {
            im2col(xb, g, col);
            gemm(cout, g.col_rows(), g.col_cols(), weight, false, col, false, ob, T::zero());
        }
        if let Some(bias) = bias {
            add_channel_bias(ob, bias, g.col_cols());
        }
    });
    out
}

pub struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(x: &[T], batch: usize, g: &ConvGeom, weight: &[T], cout: usize, dy: &[T], need_dx: bool) -> ConvGrads<T> {
    let in_per = g.channels * g.h * g.w;
    let out_per = cout * g.col_cols();
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut dw = vec![T::zero(); cout * rows];
    let mut db = vec![T::zero(); cout];
    let mut col = vec![T::zero(); rows * cols];
    for b in 0..batch {
        let xb = &x[b * in_per..(b + 1) * in_per];
        let dyb = &dy[b * out_per..(b + 1) * out_per];
        let colref: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, g, &mut col);
            &col
        };
        gemm(cout, cols, rows, dyb, false, colref, true, &mut dw, T::one());
    }
    channel_bias_grad(dy, cout, cols, &mut db);
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); batch * in_per];
        let dcol_len = if g.is_pointwise() { 0 } else { rows * cols };
        dx.par_chunks_mut(in_per).enumerate().for_each_init(|| vec![T::zero(); dcol_len], |dcol, (b, dxb)| {
            let dyb = &dy[b * out_per..(b + 1) * out_per];
            if g.is_pointwise() {
                gemm(rows, cout, cols, weight, true, dyb, false, dxb, T::zero());
            } else {
                gemm(rows, cout, cols, weight, true, dyb, false, dcol, T::zero());
                col2im(dcol, g, dxb);
            }
        });
        dx
    });
    ConvGrads { dx, dw, db }
}

/// Transposed convolution. `x: [b, cin, h, w]`, `w: [cin, cout, k, k]`.
/// `g` is the geometry of the adjoint forward conv: its image is the
/// `[cout, H, W]` output and its grid is the `[h, w]` input.
pub fn conv_transpose2d_forward<T: Scalar>(x: &[T], batch: usize, g: &ConvGeom, weight: &[T], bias: Option<&[T]>, cin: usize) -> Vec<T> {
    let cout = g.channels;
    let in_per = cin * g.col_cols();
    let out_per = cout * g.h * g.w;
    let mut out = vec![T::zero(); batch * out_per];
    let col_len = g.col_rows() * g.col_cols();
    out.par_chunks_mut(out_per).enumerate().for_each_init(|| vec![T::zero(); col_len], |col, (b, ob)| {
        let xb = &x[b * in_per..(b + 1) * in_per];
        gemm(g.col_rows(), cin, g.col_cols(), weight, true, xb, false, col, T::zero());
        col2im(col, g, ob);
        if let Some(bias) = bias {
            add_channel_bias(ob, bias, g.h * g.w);
        }
    });
    out
}

pub fn conv_transpose2d_backward<T: Scalar>(x: &[T], batch: usize, g: &ConvGeom, weight: &[T], cin: usize, dy: &[T], need_dx: bool) -> ConvGrads<T> {
    let cout = g.channels;
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_per = cin * cols;
    let out_per = cout * g.h * g.w;
    let mut dw = vec![T::zero(); cin * rows];
    let mut db = vec![T::zero(); cout];
    let mut dx = need_dx.then(|| vec![T::zero(); batch * in_per]);
    let mut col = vec![T::zero(); rows * cols];
    for b in 0..batch {
        let dyb = &dy[b * out_per..(b + 1) * out_per];
        im2col(dyb, g, &mut col);
        let xb = &x[b * in_per..(b + 1) * in_per];
        gemm(cin, cols, rows, xb, false, &col, true, &mut dw, T::one());
        if let Some(dx) = dx.as_mut() {
            gemm(cin, rows, cols, weight, false, &col, false, &mut dx[b * in_per..(b + 1) * in_per], T::zero());
        }
    }
    channel_bias_grad(dy, cout, g.h * g.w, &mut db);
    ConvGrads { dx, dw, db }
}

/// Per-(sample, group) statistics saved for the backward pass.
pub struct GroupNormSaved {
    pub mean: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn group_norm_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    plane: usize,
    groups: usize,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Vec<T>, GroupNormSaved) {
    let cpg = channels / groups;
    let gsize = cpg * plane;
    let mut y = vec![T::zero(); x.len()];
    let mut mean = vec![0f64; batch * groups];
    let mut rstd = vec![0f64; batch * groups];
    for (gi, (xs, ys)) in x.chunks(gsize).zip(y.chunks_mut(gsize)).enumerate() {
        let n = gsize as f64;
        let m = xs.iter().map(|&v| v.f64()).sum::<f64>() / n;
        let var = xs.iter().map(|&v| (v.f64() - m).powi(2)).sum::<f64>() / n;
        let r = 1.0 / (var + eps).sqrt();
        mean[gi] = m;
        rstd[gi] = r;
        let c0 = (gi % groups) * cpg;
        for (ci, (xc, yc)) in xs.chunks(plane).zip(ys.chunks_mut(plane)).enumerate() {
            let (ga, be) = (gamma[c0 + ci].f64(), beta[c0 + ci].f64());
            for (xv, yv) in xc.iter().zip(yc.iter_mut()) {
                *yv = T::of(ga * (xv.f64() - m) * r + be);
            }
        }
    }
    (y, GroupNormSaved { mean, rstd })
}

pub struct GroupNormGrads<T> {
    pub dx: Vec<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    channels: usize,
    plane: usize,
    groups: usize,
    gamma: &[T],
    saved: &GroupNormSaved,
) -> GroupNormGrads<T> {
    let cpg = channels / groups;
    let gsize = cpg * plane;
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![0f64; channels];
    let mut dbeta = vec![0f64; channels];
    for (gi, ((xs, dys), dxs)) in x.chunks(gsize).zip(dy.chunks(gsize)).zip(dx.chunks_mut(gsize)).enumerate() {
        let (m, r) = (saved.mean[gi], saved.rstd[gi]);
        let c0 = (gi % groups) * cpg;
        let n = gsize as f64;
        let (mut s_dxhat, mut s_dxhat_xhat) = (0f64, 0f64);
        for (ci, (xc, dyc)) in xs.chunks(plane).zip(dys.chunks(plane)).enumerate() {
            let ga = gamma[c0 + ci].f64();
            let (mut sg, mut sb) = (0f64, 0f64);
            for (&xv, &dv) in xc.iter().zip(dyc) {
                let xhat = (xv.f64() - m) * r;
                let d = dv.f64();
                sg += d * xhat;
                sb += d;
                s_dxhat += d * ga;
                s_dxhat_xhat += d * ga * xhat;
            }
            dgamma[c0 + ci] += sg;
            dbeta[c0 + ci] += sb;
        }
        let (mean_d, mean_dx) = (s_dxhat / n, s_dxhat_xhat / n);
        for (ci, ((xc, dyc), dxc)) in xs.chunks(plane).zip(dys.chunks(plane)).zip(dxs.chunks_mut(plane)).enumerate() {
            let ga = gamma[c0 + ci].f64();
            for ((&xv, &dv), o) in xc.iter().zip(dyc).zip(dxc.iter_mut()) {
                let xhat = (xv.f64() - m) * r;
                *o = T::of(r * (dv.f64() * ga - mean_d - xhat * mean_dx));
            }
        }
    }
    GroupNormGrads {
        dx,
        dgamma: dgamma.into_iter().map(T::of).collect(),
        dbeta: dbeta.into_iter().map(T::of).collect(),
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x * Phi(x)`.
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    x * half * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let cdf = half * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = T::of(FRAC_1_SQRT_2PI) * (-half * x * x).exp();
    cdf + x * pdf
}

/// Saved per-sample intermediates of multi-head spatial self-attention.
pub struct AttentionSaved<T> {
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    pub probs: Vec<T>,
    pub o: Vec<T>,
}

pub struct AttentionWeights<'a, T> {
    pub wq: &'a [T],
    pub wk: &'a [T],
    pub wv: &'a [T],
    pub wo: &'a [T],
}

fn softmax_rows<T: Scalar>(s: &mut [T], n: usize) {
    for row in s.chunks_mut(n) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = 0f64;
        for v in row.iter_mut() {
            let e = (*v - mx).f64().exp();
            *v = T::of(e);
            z += e;
        }
        let inv = T::of(1.0 / z);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// `y = x + Wo · concat_h(V_h softmax(Q_hᵀ K_h / sqrt(d))ᵀ)` with sequence length `n = h·w`.
pub fn attention_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    n: usize,
    heads: usize,
    wts: &AttentionWeights<'_, T>,
) -> (Vec<T>, AttentionSaved<T>) {
    let dk = channels / heads;
    let per = channels * n;
    let scale = T::of(1.0 / (dk as f64).sqrt());
    let mut saved = AttentionSaved {
        q: vec![T::zero(); batch * per],
        k: vec![T::zero(); batch * per],
        v: vec![T::zero(); batch * per],
        probs: vec![T::zero(); batch * heads * n * n],
        o: vec![T::zero(); batch * per],
    };
    let mut y = x.to_vec();
    for b in 0..batch {
        let xb = &x[b * per..(b + 1) * per];
        let q = &mut saved.q[b * per..(b + 1) * per];
        gemm(channels, channels, n, wts.wq, false, xb, false, q, T::zero());
        let k = &mut saved.k[b * per..(b + 1) * per];
        gemm(channels, channels, n, wts.wk, false, xb, false, k, T::zero());
        let v = &mut saved.v[b * per..(b + 1) * per];
        gemm(channels, channels, n, wts.wv, false, xb, false, v, T::zero());
        for h in 0..heads {
            let hs = h * dk * n..(h + 1) * dk * n;
            let p = &mut saved.probs[(b * heads + h) * n * n..(b * heads + h + 1) * n * n];
            gemm(n, dk, n, &saved.q[b * per..][hs.clone()], true, &saved.k[b * per..][hs.clone()], false, p, T::zero());
            for s in p.iter_mut() {
                *s *= scale;
            }
            softmax_rows(p, n);
            let o = &mut saved.o[b * per..(b + 1) * per][hs.clone()];
            gemm(dk, n, n, &saved.v[b * per..][hs], false, p, true, o, T::zero());
        }
        gemm(channels, channels, n, wts.wo, false, &saved.o[b * per..(b + 1) * per], false, &mut y[b * per..(b + 1) * per], T::one());
    }
    (y, saved)
}

pub struct AttentionGrads<T> {
    pub dx: Vec<T>,
    pub dwq: Vec<T>,
    pub dwk: Vec<T>,
    pub dwv: Vec<T>,
    pub dwo: Vec<T>,
}

pub fn attention_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    batch: usize,
    channels: usize,
    n: usize,
    heads: usize,
    wts: &AttentionWeights<'_, T>,
    saved: &AttentionSaved<T>,
) -> AttentionGrads<T> {
    let dk = channels / heads;
    let per = channels * n;
    let cc = channels * channels;
    let scale = T::of(1.0 / (dk as f64).sqrt());
    let mut g = AttentionGrads {
        dx: dy.to_vec(),
        dwq: vec![T::zero(); cc],
        dwk: vec![T::zero(); cc],
        dwv: vec![T::zero(); cc],
        dwo: vec![T::zero(); cc],
    };
    let mut d_o = vec![T::zero(); per];
    let mut dq = vec![T::zero(); per];
    let mut dkk = vec![T::zero(); per];
    let mut dv = vec![T::zero(); per];
    let mut dp = vec![T::zero(); n * n];
    for b in 0..batch {
        let r = b * per..(b + 1) * per;
        let (xb, dyb) = (&x[r.clone()], &dy[r.clone()]);
        let (q, k, v, o) = (&saved.q[r.clone()], &saved.k[r.clone()], &saved.v[r.clone()], &saved.o[r.clone()]);
        gemm(channels, n, channels, dyb, false, o, true, &mut g.dwo, T::one());
        gemm(channels, channels, n, wts.wo, true, dyb, false, &mut d_o, T::zero());
        for h in 0..heads {
            let hs = h * dk * n..(h + 1) * dk * n;
            let p = &saved.probs[(b * heads + h) * n * n..(b * heads + h + 1) * n * n];
            let doh = &d_o[hs.clone()];
            gemm(dk, n, n, doh, false, p, false, &mut dv[hs.clone()], T::zero());
            gemm(n, dk, n, doh, true, &v[hs.clone()], false, &mut dp, T::zero());
            for (dprow, prow) in dp.chunks_mut(n).zip(p.chunks(n)) {
                let dot: f64 = dprow.iter().zip(prow).map(|(&a, &b)| a.f64() * b.f64()).sum();
                let dot = T::of(dot);
                for (d, &pv) in dprow.iter_mut().zip(prow) {
                    *d = pv * (*d - dot) * scale;
                }
            }
            gemm(dk, n, n, &k[hs.clone()], false, &dp, true, &mut dq[hs.clone()], T::zero());
            gemm(dk, n, n, &q[hs.clone()], false, &dp, false, &mut dkk[hs.clone()], T::zero());
        }
        for (dproj, w, dw) in [(&dq, wts.wq, &mut g.dwq), (&dkk, wts.wk, &mut g.dwk), (&dv, wts.wv, &mut g.dwv)] {
            gemm(channels, n, channels, dproj, false, xb, true, dw, T::one());
            gemm(channels, channels, n, w, true, dproj, false, &mut g.dx[r.clone()], T::one());
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0f32; 4];
        gemm(2, 2, 2, &a, false, &b, false, &mut c, 0.0);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, &mut c, 0.0);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, &mut c, 0.0);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom::new(2, 5, 4, 3, 2, 1).unwrap();
        let img: Vec<f32> = (0..40).map(|i| (i as f32 * 0.37).sin()).collect();
        let colv: Vec<f32> = (0..g.col_rows() * g.col_cols()).map(|i| (i as f32 * 0.11).cos()).collect();
        let mut col = vec![0.0; colv.len()];
        im2col(&img, &g, &mut col);
        let lhs: f64 = col.iter().zip(&colv).map(|(&a, &b)| f64::from(a * b)).sum();
        let mut back = vec![0.0; img.len()];
        col2im(&colv, &g, &mut back);
        let rhs: f64 = img.iter().zip(&back).map(|(&a, &b)| f64::from(a * b)).sum();
        assert!((lhs - rhs).abs() < 1e-5);
    }

    #[test]
    fn im2col_matches_direct_indexing() {
        for (c, h, w, k, s, p) in [(2, 5, 4, 3, 2, 1), (3, 6, 6, 3, 1, 1), (1, 7, 5, 2, 2, 0), (2, 4, 7, 5, 1, 2), (1, 3, 3, 3, 3, 2), (2, 8, 8, 3, 2, 1)] {
            let g = ConvGeom::new(c, h, w, k, s, p).unwrap();
            let img: Vec<f32> = (0..c * h * w).map(|i| i as f32 + 1.0).collect();
            let mut col = vec![f32::NAN; g.col_rows() * g.col_cols()];
            im2col(&img, &g, &mut col);
            let mut back = vec![0.0; img.len()];
            let mut hits = vec![0.0; img.len()];
            for ch in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        for oy in 0..g.ho {
                            for ox in 0..g.wo {
                                let (iy, ix) = ((oy * s + ki) as isize - p as isize, (ox * s + kj) as isize - p as isize);
                                let inside = iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                                let at = (((ch * k + ki) * k + kj) * g.ho + oy) * g.wo + ox;
                                let want = if inside { img[(ch * h + iy as usize) * w + ix as usize] } else { 0.0 };
                                assert_eq!(col[at], want, "{:?}", (c, h, w, k, s, p));
                                if inside {
                                    hits[(ch * h + iy as usize) * w + ix as usize] += 1.0;
                                }
                            }
                        }
                    }
                }
            }
            col2im(&vec![1.0; col.len()], &g, &mut back);
            assert_eq!(back, hits);
        }
    }

    #[test]
    fn gelu_matches_erf_definition() {
        assert_eq!(gelu(0.0f32), 0.0);
        assert!((gelu(1.0f32) - 0.841_344_7).abs() < 1e-6);
        let h = 1e-3f64;
        for &x in &[-2.0f32, -0.3, 0.7, 1.9] {
            let num = (f64::from(gelu(x + h as f32)) - f64::from(gelu(x - h as f32))) / (2.0 * h);
            assert!((num - f64::from(gelu_grad(x))).abs() < 1e-3);
        }
    }
}
