//! Finite-difference gradient checks in double precision.
//!
//! Each check records a scalar loss `<op(inputs), R>` with a fixed random
//! projection `R`, back-propagates once, and compares the analytic gradient
//! with central differences at sampled coordinates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::conv::{conv2d_forward, conv_transpose2d_forward};
use crate::ops::{ConvSpec, PoolSpec};
use crate::pyramid::params::mix_seed;
use crate::pyramid::{build_resfpn, ParamStore, PyramidConfig};
use crate::tape::{Tape, Var};
use crate::tensor::{Fill, Shape, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-3;

/// Smallest step tried when a kink lies inside the default step.
pub const MIN_FD_STEP: f64 = 1e-6;

/// Default tolerance of nonlinear checks; linear checks use 1/100 of it.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Coordinates sampled per input tensor of a single-op check.
pub const OP_POINTS: usize = 100;

/// Coordinates sampled per parameter tensor of the full-network check.
pub const NET_POINTS_PER_TENSOR: usize = 6;

/// Available checks, in suite order.
pub const CHECK_NAMES: [&str; 17] = [
    "add",
    "fanout",
    "concat",
    "conv3x3",
    "conv3x3_stride2",
    "conv1x1",
    "conv_dilated",
    "upconv",
    "maxpool2",
    "maxpool4",
    "leaky_relu",
    "bilinear_down",
    "bilinear_up",
    "soft_argmin",
    "smooth_l1",
    "adjoint",
    "resfpn",
];

/// Whether a check's function is linear (or piecewise linear with no kink
/// inside the sampled steps), which tightens its tolerance.
pub fn is_linear(name: &str) -> bool {
    !matches!(name, "fanout" | "soft_argmin" | "smooth_l1" | "resfpn")
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub points: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Relative error with a floor that keeps round-off on near-zero entries
/// from dominating: the denominator is at least `1e-3` of the largest
/// analytic gradient magnitude of the check.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale + 1e-12);
    (analytic - numeric).abs() / denom
}

fn random(shape: Shape, low: f64, high: f64, seed: u64) -> Result<Tensor<f64>> {
    Tensor::create(shape, Fill::Uniform { low, high }, seed)
}

fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape { n, c, h, w }
}

/// Values spaced at least `gap` apart in random order, so max-pool windows
/// have a unique maximum that no finite-difference step can overturn.
fn distinct(shape: Shape, gap: f64, seed: u64) -> Result<Tensor<f64>> {
    let n = shape.numel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = sample(&mut rng, n, n);
    let data = order.iter().map(|i| (i as f64 - n as f64 / 2.0) * gap).collect();
    Tensor::from_vec(shape, data)
}

/// Values with `|x| >= margin`.
fn away_from_zero(shape: Shape, margin: f64, seed: u64) -> Result<Tensor<f64>> {
    let mut t = random(shape, -1.0, 1.0, seed)?;
    for v in t.data_mut() {
        *v = v.signum() * (margin + v.abs());
    }
    Ok(t)
}

/// Records `<f(inputs), R>`.
fn projected<F>(tape: &mut Tape<f64>, vars: &[Var], f: &F, seed: u64) -> Result<Var>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let out = f(tape, vars)?;
    let s = tape.shape(out);
    if s.is_scalar() {
        return Ok(out);
    }
    let r = tape.leaf(random(s, -1.0, 1.0, seed)?);
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

/// Checks `f` over `inputs`, sampling up to `points` coordinates per input.
pub fn check_function<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    f: F,
    points: usize,
    tolerance: f64,
    seed: u64,
) -> Result<CheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let proj_seed = mix_seed(seed, 0xF00D);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad()))
        .collect();
    let loss = projected(&mut tape, &vars, &f, proj_seed)?;
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = projected(&mut tape, &vars, &f, proj_seed)?;
        tape.value(loss).item()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC0DE));
    let mut pairs = Vec::new();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let n = input.len();
        for i in sample(&mut rng, n, points.min(n)) {
            let x0 = input.data()[i];
            work[k].data_mut()[i] = x0 + FD_STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = x0 - FD_STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = x0;
            pairs.push((grads[k][i], (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    Ok(summarize(name, &pairs, tolerance))
}

fn summarize(name: &str, pairs: &[(f64, f64)], tolerance: f64) -> CheckResult {
    let scale = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let max_rel_error = pairs
        .iter()
        .map(|&(a, n)| relative_error(a, n, scale))
        .fold(0.0, f64::max);
    CheckResult {
        name: name.to_string(),
        max_rel_error,
        tolerance,
        points: pairs.len(),
    }
}

fn conv_check(name: &str, spec: ConvSpec, input: Shape, tol: f64, seed: u64, transposed: bool) -> Result<CheckResult> {
    let k = spec.kernel;
    let w_shape = if transposed {
        shape(input.c, spec.out_channels, k, k)
    } else {
        shape(spec.out_channels, input.c, k, k)
    };
    let inputs = [
        random(input, -1.0, 1.0, mix_seed(seed, 1))?,
        random(w_shape, -0.5, 0.5, mix_seed(seed, 2))?,
        random(shape(1, spec.out_channels, 1, 1), -0.5, 0.5, mix_seed(seed, 3))?,
    ];
    check_function(
        name,
        &inputs,
        |t, v| {
            if transposed {
                t.conv_transpose2d(v[0], v[1], v[2], spec)
            } else {
                t.conv2d(v[0], v[1], v[2], spec)
            }
        },
        OP_POINTS,
        tol,
        seed,
    )
}

/// `<conv(x), y>` against `<x, conv_transpose(y)>` with shared weights.
pub fn adjoint_check(tolerance: f64, seed: u64) -> Result<CheckResult> {
    let spec = ConvSpec::upconv(6, 2)?;
    let x = random(shape(2, 5, 16, 12), -1.0, 1.0, mix_seed(seed, 1))?;
    let w = random(shape(6, 5, 4, 4), -1.0, 1.0, mix_seed(seed, 2))?;
    let zero_out = Tensor::zeros(shape(1, 6, 1, 1));
    let zero_in = Tensor::zeros(shape(1, 5, 1, 1));
    let cx = conv2d_forward(&x, &w, &zero_out, &spec)?;
    let y = random(cx.shape(), -1.0, 1.0, mix_seed(seed, 3))?;
    let spec_t = ConvSpec::upconv(5, 2)?;
    let ty = conv_transpose2d_forward(&y, &w, &zero_in, &spec_t)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let lhs = dot(cx.data(), y.data());
    let rhs = dot(x.data(), ty.data());
    Ok(CheckResult {
        name: "adjoint".into(),
        max_rel_error: (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300),
        tolerance,
        points: 1,
    })
}

/// A recorded tape and its loss variable.
type Recorded = (Tape<f64>, Var);

/// Full pyramid: loss = mean of the finest decoder map, every parameter
/// tensor sampled.
///
/// Along a single coordinate the network is piecewise linear (LeakyReLU,
/// max pooling, convolutions), so a central difference is exact unless the
/// step straddles a kink. Such coordinates are detected by one-sided
/// differences that change with the step or disagree, and are re-measured
/// with ten times smaller steps, down to [`MIN_FD_STEP`].
pub fn network_check(config: &PyramidConfig, tolerance: f64, seed: u64) -> Result<CheckResult> {
    let net = build_resfpn(config)?;
    let params = net.init_params_with_seed::<f64>(seed)?;
    let multiple = config.input_multiple();
    let m = 64usize.div_ceil(multiple) * multiple;
    let input = random(shape(1, config.encoder_depths[0], m, m), 0.0, 1.0, mix_seed(seed, 7))?;
    let loss_of = |params: &ParamStore<f64>, input: &Tensor<f64>, grads: bool| -> Result<(f64, Option<Recorded>)> {
        let mut tape = Tape::new();
        let x = tape.leaf(if grads {
            input.clone().with_requires_grad()
        } else {
            input.clone()
        });
        let features = net.forward(&mut tape, params, x)?;
        let finest = features
            .finest()
            .ok_or_else(|| Error::Contract("gradient check needs a decoder".into()))?;
        let loss = tape.mean(finest)?;
        let value = tape.value(loss).item()?;
        if grads {
            tape.backward(loss)?;
            Ok((value, Some((tape, x))))
        } else {
            Ok((value, None))
        }
    };
    let (f0, tape) = loss_of(&params, &input, true)?;
    let (tape, x) = tape.expect("recorded");
    let mut grads: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
    for (id, g) in tape.param_grads() {
        for (a, b) in grads[id].iter_mut().zip(g) {
            *a += b;
        }
    }
    let input_grad = tape.grad(x).map(<[f64]>::to_vec).unwrap_or_default();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC0DE));
    let mut pairs = Vec::new();
    let mut work = params.clone();
    let mut work_input = input.clone();
    // Each side is probed at h and h/2. When both one-sided slopes are
    // stable and agree, no kink lies within the step and the central
    // difference over [-h/2, h/2] is exact up to round-off.
    let derivative = |probe: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> {
        let mut h = FD_STEP;
        loop {
            let (p1, p2) = (probe(h)?, probe(h / 2.0)?);
            let (m1, m2) = (probe(-h)?, probe(-h / 2.0)?);
            let slopes = [(p1 - f0) / h, (p2 - f0) * 2.0 / h, (f0 - m1) / h, (f0 - m2) * 2.0 / h];
            let big = slopes.iter().fold(0.0f64, |a, s| a.max(s.abs()));
            let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let magnitude = [f0, p1, p2, m1, m2].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let roundoff = 128.0 * f64::EPSILON * magnitude / h;
            if hi - lo <= 1e-5 * big + roundoff || h <= MIN_FD_STEP {
                return Ok((p2 - m2) / h);
            }
            h /= 10.0;
        }
    };
    for (id, grad) in grads.iter().enumerate() {
        let n = grad.len();
        for i in sample(&mut rng, n, NET_POINTS_PER_TENSOR.min(n)) {
            let x0 = params.get(id).data()[i];
            let numeric = derivative(&mut |dx| {
                work.get_mut(id).data_mut()[i] = x0 + dx;
                let v = loss_of(&work, &input, false)?.0;
                work.get_mut(id).data_mut()[i] = x0;
                Ok(v)
            })?;
            pairs.push((grad[i], numeric));
        }
    }
    for i in sample(&mut rng, input.len(), 16.min(input.len())) {
        let x0 = input.data()[i];
        let numeric = derivative(&mut |dx| {
            work_input.data_mut()[i] = x0 + dx;
            let v = loss_of(&params, &work_input, false)?.0;
            work_input.data_mut()[i] = x0;
            Ok(v)
        })?;
        pairs.push((input_grad[i], numeric));
    }
    Ok(summarize("resfpn", &pairs, tolerance))
}

/// Runs one named check. `tolerance` applies to nonlinear checks; linear
/// ones use `tolerance / 100`.
pub fn run_check(name: &str, config: &PyramidConfig, tolerance: f64, seed: u64) -> Result<CheckResult> {
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::config("tol", "tolerance must be >= 0"));
    }
    let tol = if is_linear(name) { tolerance / 100.0 } else { tolerance };
    let s = |k: u64| mix_seed(seed, k);
    let small = shape(1, 4, 8, 8);
    match name {
        "add" => check_function(
            name,
            &[random(small, -1.0, 1.0, s(1))?, random(small, -1.0, 1.0, s(2))?],
            |t, v| t.add(v[0], v[1]),
            OP_POINTS,
            tol,
            seed,
        ),
        "fanout" => check_function(
            name,
            &[random(small, -1.0, 1.0, s(1))?],
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                let twice = t.add(v[0], v[0])?;
                t.add(sq, twice)
            },
            OP_POINTS,
            tol,
            seed,
        ),
        "concat" => check_function(
            name,
            &[
                random(shape(2, 2, 4, 4), -1.0, 1.0, s(1))?,
                random(shape(2, 3, 4, 4), -1.0, 1.0, s(2))?,
                random(shape(2, 1, 4, 4), -1.0, 1.0, s(3))?,
            ],
            |t, v| t.concat(v),
            OP_POINTS,
            tol,
            seed,
        ),
        "conv3x3" => conv_check(name, ConvSpec::same(6, 3, 1)?, shape(2, 4, 8, 8), tol, seed, false),
        "conv3x3_stride2" => conv_check(name, ConvSpec::same(6, 3, 2)?, shape(2, 4, 8, 8), tol, seed, false),
        "conv1x1" => conv_check(name, ConvSpec::same(6, 1, 1)?, shape(2, 4, 8, 8), tol, seed, false),
        "conv_dilated" => conv_check(name, ConvSpec::new(5, 3, 1, 2, 2)?, shape(1, 3, 9, 7), tol, seed, false),
        "upconv" => conv_check(name, ConvSpec::upconv(5, 2)?, shape(2, 4, 4, 6), tol, seed, true),
        "maxpool2" | "maxpool4" => {
            let k = if name == "maxpool2" { 2 } else { 4 };
            let pool = PoolSpec::square(k)?;
            check_function(
                name,
                &[distinct(shape(1, 3, 8, 8), 0.01, s(1))?],
                move |t, v| t.max_pool2d(v[0], pool),
                OP_POINTS,
                tol,
                seed,
            )
        }
        "leaky_relu" => check_function(
            name,
            &[away_from_zero(small, 0.01, s(1))?],
            |t, v| t.leaky_relu(v[0], 0.1),
            OP_POINTS,
            tol,
            seed,
        ),
        "bilinear_down" => check_function(
            name,
            &[random(small, -1.0, 1.0, s(1))?],
            |t, v| t.bilinear_resize(v[0], 4, 4),
            OP_POINTS,
            tol,
            seed,
        ),
        "bilinear_up" => check_function(
            name,
            &[random(shape(1, 2, 3, 5), -1.0, 1.0, s(1))?],
            |t, v| t.bilinear_resize(v[0], 12, 20),
            OP_POINTS,
            tol,
            seed,
        ),
        "soft_argmin" => check_function(
            name,
            &[
                random(shape(2, 4, 3, 10), -1.0, 1.0, s(1))?,
                random(shape(2, 4, 3, 10), -1.0, 1.0, s(2))?,
            ],
            |t, v| t.soft_argmin_disparity(v[0], v[1], 4),
            OP_POINTS,
            tol,
            seed,
        ),
        "smooth_l1" => {
            let n = 64;
            let target: Vec<f64> = random(shape(1, 1, 8, 8), -3.0, 3.0, s(2))?.into_data();
            let mask: Vec<bool> = (0..n).map(|i| i % 5 != 0).collect();
            // Residuals kept away from the |r| = 1 switch.
            let mut pred = away_from_zero(shape(1, 1, 8, 8), 0.05, s(1))?;
            for (p, &t) in pred.data_mut().iter_mut().zip(&target) {
                *p = t + if p.abs() < 1.0 { *p * 0.9 } else { *p * 2.0 };
            }
            check_function(
                name,
                &[pred],
                move |tape, v| tape.smooth_l1(v[0], target.clone(), mask.clone()),
                OP_POINTS,
                tol,
                seed,
            )
        }
        "adjoint" => adjoint_check(tol, seed),
        "resfpn" => network_check(config, tol, seed),
        other => Err(Error::config(
            "op",
            format!("unknown check `{other}`, expected one of {}", CHECK_NAMES.join(", ")),
        )),
    }
}

/// Runs every check, or only `only` when given.
pub fn run_suite(config: &PyramidConfig, tolerance: f64, only: Option<&str>, seed: u64) -> Result<Vec<CheckResult>> {
    match only {
        Some(name) => Ok(vec![run_check(name, config, tolerance, seed)?]),
        None => CHECK_NAMES
            .iter()
            .map(|name| run_check(name, config, tolerance, seed))
            .collect(),
    }
}
