//! Central finite-difference checks of the graph's analytic gradients.
//!
//! The scalar objective is `Σ r ⊙ op(inputs)` for a fixed random projection
//! `r`, evaluated in f64 outside the graph. Inputs are drawn with magnitude in
//! `[0.1, 1]` so no perturbation crosses a ReLU or abs kink.
//!
//! [`grad_check`] runs the generic kernels instantiated at f64. In f32 the
//! forward rounding alone puts the central-difference estimate about 1e-4
//! off in absolute terms, which swamps the relative metric wherever a true
//! gradient is small; [`grad_check_f32`] reports that figure anyway.

use super::{GraphT, Scalar, TensorT, Var};
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Maximum number of coordinates probed per input tensor.
const COORDS_PER_INPUT: usize = 24;

type Builder<T> = Box<dyn Fn(&mut GraphT<T>, &[Var]) -> Result<Var>>;

struct Case<T> {
    inputs: Vec<TensorT<T>>,
    build: Builder<T>,
}

fn signed_away_from_zero<T: Scalar>(shape: &[usize], rng: &mut RngState) -> TensorT<T> {
    TensorT::from_fn(shape.to_vec(), |_| {
        let m = rng.uniform_range(0.1, 1.0);
        T::of(if rng.uniform() < 0.5 { -m } else { m })
    })
}

fn shape_arg<'a>(shapes: &'a [Vec<usize>], i: usize, op: &str, rank: usize) -> Result<&'a [usize]> {
    let s = shapes
        .get(i)
        .ok_or_else(|| Error::Usage(format!("grad_check {op}: missing trial shape #{i}")))?;
    if s.len() != rank {
        return Err(Error::Usage(format!("grad_check {op}: shape #{i} must have rank {rank}")));
    }
    Ok(s)
}

fn build_case<T: Scalar>(opname: &str, shapes: &[Vec<usize>], seed: u64, rng: &mut RngState) -> Result<Case<T>> {
    let (name, arg) = match opname.split_once(':') {
        Some((n, a)) => {
            let v = a
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("grad_check: bad argument in {opname}")))?;
            (n, Some(v))
        }
        None => (opname, None),
    };
    let case = match name {
        "linear" => {
            let x = shape_arg(shapes, 0, name, 2)?;
            let w = shape_arg(shapes, 1, name, 2)?;
            Case {
                inputs: vec![
                    signed_away_from_zero(x, rng),
                    signed_away_from_zero(w, rng),
                    signed_away_from_zero(&[w[0]], rng),
                ],
                build: Box::new(|g, v| g.linear(v[0], v[1], Some(v[2]))),
            }
        }
        "relu" | "gelu" | "exp" | "abs" | "square" => {
            let x = shapes
                .first()
                .ok_or_else(|| Error::Usage(format!("grad_check {name}: missing shape")))?;
            let op = name.to_string();
            Case {
                inputs: vec![signed_away_from_zero(x, rng)],
                build: Box::new(move |g, v| match op.as_str() {
                    "relu" => g.relu(v[0]),
                    "gelu" => g.gelu(v[0]),
                    "exp" => g.exp(v[0]),
                    "abs" => g.abs(v[0]),
                    _ => g.square(v[0]),
                }),
            }
        }
        "conv2d" | "conv2d_s2" => {
            let x = shape_arg(shapes, 0, name, 4)?;
            let w = shape_arg(shapes, 1, name, 4)?;
            let k = w[2];
            let (stride, pad) = match (name, k) {
                ("conv2d_s2", _) => (2, k / 2),
                (_, 2) => (2, 0),
                _ => (1, k / 2),
            };
            Case {
                inputs: vec![
                    signed_away_from_zero(x, rng),
                    signed_away_from_zero(w, rng),
                    signed_away_from_zero(&[w[0]], rng),
                ],
                build: Box::new(move |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad)),
            }
        }
        "conv_transpose2d" => {
            let x = shape_arg(shapes, 0, name, 4)?;
            let w = shape_arg(shapes, 1, name, 4)?;
            let stride = w[2];
            Case {
                inputs: vec![
                    signed_away_from_zero(x, rng),
                    signed_away_from_zero(w, rng),
                    signed_away_from_zero(&[w[1]], rng),
                ],
                build: Box::new(move |g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), stride)),
            }
        }
        "group_norm" => {
            let x = shape_arg(shapes, 0, name, 4)?;
            let groups = arg.unwrap_or(8);
            Case {
                inputs: vec![
                    signed_away_from_zero(x, rng),
                    signed_away_from_zero(&[x[1]], rng),
                    signed_away_from_zero(&[x[1]], rng),
                ],
                build: Box::new(move |g, v| g.group_norm(v[0], groups, v[1], v[2], 1e-6)),
            }
        }
        "self_attention" => {
            let x = shape_arg(shapes, 0, name, 4)?;
            let heads = arg.unwrap_or(2);
            let c = x[1];
            let s = T::of(1.0 / (c as f64).sqrt());
            let mut inputs = vec![signed_away_from_zero(x, rng)];
            for _ in 0..4 {
                let mut t: TensorT<T> = signed_away_from_zero(&[c, c], rng);
                t.data_mut().iter_mut().for_each(|v| *v *= s);
                inputs.push(t);
            }
            Case {
                inputs,
                build: Box::new(move |g, v| g.self_attention(v[0], heads, [v[1], v[2], v[3], v[4]])),
            }
        }
        "dropout" => {
            let x = shapes
                .first()
                .ok_or_else(|| Error::Usage("grad_check dropout: missing shape".into()))?;
            Case {
                inputs: vec![signed_away_from_zero(x, rng)],
                build: Box::new(move |g, v| {
                    let mut r = RngState::new(seed).split(0xD0);
                    g.dropout(v[0], 0.3, true, &mut r)
                }),
            }
        }
        other => return Err(Error::Usage(format!("grad_check: unknown op '{other}'"))),
    };
    Ok(case)
}

type Evaluated<T> = (f64, GraphT<T>, Var, Vec<Var>);

fn evaluate<T: Scalar>(case: &Case<T>, inputs: &[TensorT<T>], proj: Option<&TensorT<T>>) -> Result<Evaluated<T>> {
    let mut g = GraphT::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = (case.build)(&mut g, &vars)?;
    let loss = proj.map(|r| g.value(out).dot_f64(r)).unwrap_or(0.0);
    Ok((loss, g, out, vars))
}

/// Largest `|analytic − numeric| / max(1e-6, |numeric|)` over sampled
/// coordinates of every input of `opname`.
///
/// `opname` may carry an integer argument after a colon (`group_norm:2`
/// selects two groups, `self_attention:4` four heads).
pub fn grad_check(opname: &str, trial_shapes: &[Vec<usize>], eps: f64, seed: u64) -> Result<f64> {
    check::<f64>(opname, trial_shapes, eps, seed)
}

/// Same check with the kernels run in f32.
pub fn grad_check_f32(opname: &str, trial_shapes: &[Vec<usize>], eps: f64, seed: u64) -> Result<f64> {
    check::<f32>(opname, trial_shapes, eps, seed)
}

fn check<T: Scalar>(opname: &str, trial_shapes: &[Vec<usize>], eps: f64, seed: u64) -> Result<f64> {
    let mut rng = RngState::new(seed);
    let case = build_case::<T>(opname, trial_shapes, seed, &mut rng)?;
    let (_, g0, out0, _) = evaluate(&case, &case.inputs, None)?;
    let proj = TensorT::uniform(g0.value(out0).shape().to_vec(), -T::one(), T::one(), &mut rng);
    drop(g0);

    let (_, mut g, out, vars) = evaluate(&case, &case.inputs, Some(&proj))?;
    g.backward_with(out, proj.clone())?;
    let analytic: Vec<Vec<T>> = vars
        .iter()
        .zip(&case.inputs)
        .map(|(v, t)| g.grad(*v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); t.numel()]))
        .collect();

    let mut worst = 0f64;
    for (ti, input) in case.inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = if n <= COORDS_PER_INPUT {
            (0..n).collect()
        } else {
            (0..COORDS_PER_INPUT).map(|_| rng.below(n)).collect()
        };
        for &ci in &coords {
            let mut plus = case.inputs.clone();
            let mut minus = case.inputs.clone();
            let base = input.data()[ci];
            let (hi, lo) = (base + T::of(eps), base - T::of(eps));
            plus[ti].data_mut()[ci] = hi;
            minus[ti].data_mut()[ci] = lo;
            let (lp, ..) = evaluate(&case, &plus, Some(&proj))?;
            let (lm, ..) = evaluate(&case, &minus, Some(&proj))?;
            let numeric = (lp - lm) / (hi.f64() - lo.f64());
            let a = analytic[ti][ci].f64();
            let rel = (a - numeric).abs() / numeric.abs().max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
