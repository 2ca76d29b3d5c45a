//! Named finite-difference checks for every differentiable op and the full
//! training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{
    avgpool2d, batch_norm, channel_affine, concat, conv2d, cross_entropy_with_logits, global_avg_pool,
    grad_check_with, instance_norm, linear, narrow, pad_edge, softmax, upsample_nearest, GradCheckOptions, Mode,
    RunningStats, Tape, Var,
};
use crate::error::{Error, Result};
use crate::losses::{cls_loss, dice_scores, rec_loss, weighted_dice_loss};
use crate::model::{init_params, ModelConfig};
use crate::tensor::Tensor;

/// Tolerance for ops without kinks.
pub const SMOOTH_TOL: f64 = 1e-6;
/// Tolerance for ops containing relu or abs.
pub const KINKED_TOL: f64 = 1e-4;

/// Every check, in run order.
pub const OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "relu",
    "abs",
    "tanh",
    "sigmoid",
    "square",
    "exp",
    "ln",
    "sum",
    "mean",
    "reshape",
    "conv2d",
    "linear",
    "softmax",
    "cross_entropy",
    "batch_norm_train",
    "batch_norm_eval",
    "instance_norm",
    "channel_affine",
    "avgpool2d",
    "global_avg_pool",
    "upsample_nearest",
    "concat",
    "narrow",
    "pad_edge",
    "dice",
    "weighted_dice",
    "rec_loss",
    "cls_loss",
    "composite_loss",
];

fn is_kinked(op: &str) -> bool {
    matches!(op, "relu" | "abs" | "rec_loss" | "composite_loss")
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpResult {
    pub name: String,
    pub trials: usize,
    pub tol: f64,
    /// Largest relative error over all trials.
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

impl OpResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

/// Projects `out` onto fixed random weights so that every output entry
/// contributes a distinct coefficient to the checked scalar.
fn project<'t>(out: Var<'t>, weights: &Tensor) -> Result<Var<'t>> {
    let w = out.tape().constant(weights.reshape(&out.shape())?);
    Ok(out.mul(w)?.sum())
}

fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Normal draws pushed at least `KINK_MARGIN` away from zero, so a central
/// difference never straddles the kink of relu, abs or L1.
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    normal(shape, rng).map(|x| x + KINK_MARGIN.copysign(x))
}

const KINK_MARGIN: f64 = 1e-2;

/// Runs one named check over `trials` random draws.
pub fn check_op(name: &str, trials: usize, seed: u64) -> Result<OpResult> {
    if !OPS.contains(&name) {
        return Err(Error::invalid(format!("unknown op `{name}`; known: {}", OPS.join(", "))));
    }
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let tol = if is_kinked(name) { KINKED_TOL } else { SMOOTH_TOL };
    let mut result = OpResult {
        name: name.to_string(),
        trials,
        tol,
        max_rel_error: 0.0,
        entries_checked: 0,
    };
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let opts = GradCheckOptions {
            tol,
            seed: seed ^ t as u64,
            max_entries: if name == "composite_loss" { Some(4) } else { None },
            ..Default::default()
        };
        let report = run_trial(name, &mut rng, &opts)?;
        result.max_rel_error = result.max_rel_error.max(report.0);
        result.entries_checked += report.1;
    }
    Ok(result)
}

/// Runs every check (or only `only`) with `trials` draws each.
pub fn run_suite(only: Option<&str>, trials: usize, seed: u64) -> Result<Vec<OpResult>> {
    match only {
        Some(name) => Ok(vec![check_op(name, trials, seed)?]),
        None => OPS.iter().map(|op| check_op(op, trials, seed)).collect(),
    }
}

fn run_trial(name: &str, rng: &mut ChaCha8Rng, opts: &GradCheckOptions) -> Result<(f64, usize)> {
    let small = [3, 4];
    macro_rules! check {
        ($inputs:expr, $w:expr, |$tape:ident, $v:ident| $body:expr) => {{
            let w: Tensor = $w;
            let r = grad_check_with(
                |$tape: &Tape, $v: &[Var<'_>]| -> Result<Var<'_>> {
                    let _ = $tape;
                    project($body, &w)
                },
                &$inputs,
                opts,
            )?;
            Ok((r.max_rel_error, r.entries_checked))
        }};
    }
    macro_rules! scalar {
        ($inputs:expr, |$tape:ident, $v:ident| $body:expr) => {{
            let r = grad_check_with(
                |$tape: &Tape, $v: &[Var<'_>]| -> Result<Var<'_>> {
                    let _ = $tape;
                    $body
                },
                &$inputs,
                opts,
            )?;
            Ok((r.max_rel_error, r.entries_checked))
        }};
    }
    let w_small = normal(&small, rng);
    match name {
        "add" => check!([normal(&small, rng), normal(&small, rng)], w_small, |t, v| v[0].add(v[1])?),
        "sub" => check!([normal(&small, rng), normal(&small, rng)], w_small, |t, v| v[0].sub(v[1])?),
        "mul" => check!([normal(&small, rng), normal(&small, rng)], w_small, |t, v| v[0].mul(v[1])?),
        "scale" => check!([normal(&small, rng)], w_small, |t, v| v[0].scale(-1.7)),
        "add_scalar" => check!([normal(&small, rng)], w_small, |t, v| v[0].add_scalar(0.3)),
        "relu" => check!([off_kink(&small, rng)], w_small, |t, v| v[0].relu()),
        "abs" => check!([off_kink(&small, rng)], w_small, |t, v| v[0].abs()),
        "tanh" => check!([normal(&small, rng)], w_small, |t, v| v[0].tanh()),
        "sigmoid" => check!([normal(&small, rng)], w_small, |t, v| v[0].sigmoid()),
        "square" => check!([normal(&small, rng)], w_small, |t, v| v[0].square()),
        "exp" => check!([normal(&small, rng)], w_small, |t, v| v[0].exp()),
        "ln" => check!([Tensor::uniform(&small, 0.5, 2.0, rng)], w_small, |t, v| v[0].ln()),
        "sum" => scalar!([normal(&small, rng)], |t, v| Ok(v[0].square().sum())),
        "mean" => scalar!([normal(&small, rng)], |t, v| Ok(v[0].square().mean())),
        "reshape" => check!([normal(&small, rng)], normal(&[2, 6], rng), |t, v| v[0].reshape(&[2, 6])?),
        "conv2d" => {
            let (stride, pad) = if rng.random_bool(0.5) { (1, 1) } else { (2, 0) };
            let x = normal(&[2, 3, 5, 5], rng);
            let k = normal(&[4, 3, 3, 3], rng);
            let b = normal(&[4], rng);
            let oh = (5 + 2 * pad - 3) / stride + 1;
            check!([x, k, b], normal(&[2, 4, oh, oh], rng), |t, v| conv2d(v[0], v[1], Some(v[2]), stride, pad)?)
        }
        "linear" => check!(
            [normal(&[3, 5], rng), normal(&[5, 4], rng), normal(&[4], rng)],
            normal(&[3, 4], rng),
            |t, v| linear(v[0], v[1], v[2])?
        ),
        "softmax" => check!([normal(&small, rng)], w_small, |t, v| softmax(v[0], 1)?),
        "cross_entropy" | "cls_loss" => {
            let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let logits = normal(&[4, 3], rng).map(|x| 3.0 * x);
            if name == "cls_loss" {
                scalar!([logits], |t, v| cls_loss(v[0], &labels))
            } else {
                scalar!([logits], |t, v| cross_entropy_with_logits(v[0], &labels))
            }
        }
        "batch_norm_train" => check!([normal(&[3, 2, 3, 3], rng)], normal(&[3, 2, 3, 3], rng), |t, v| {
            let mut stats = RunningStats::new(2);
            batch_norm(v[0], 1e-5, Mode::Train, &mut stats, 0.1)?
        }),
        "batch_norm_eval" => {
            let stats = RunningStats::seeded(vec![0.2, -0.1], vec![1.5, 0.7]);
            check!([normal(&[3, 2, 3, 3], rng)], normal(&[3, 2, 3, 3], rng), |t, v| {
                let mut s = stats.clone();
                batch_norm(v[0], 1e-5, Mode::Eval, &mut s, 0.1)?
            })
        }
        "instance_norm" => check!([normal(&[2, 3, 4, 4], rng)], normal(&[2, 3, 4, 4], rng), |t, v| instance_norm(
            v[0], 1e-5
        )?),
        "channel_affine" => check!(
            [normal(&[2, 3, 2, 2], rng), normal(&[3], rng), normal(&[3], rng)],
            normal(&[2, 3, 2, 2], rng),
            |t, v| channel_affine(v[0], v[1], v[2])?
        ),
        "avgpool2d" => check!([normal(&[2, 2, 4, 4], rng)], normal(&[2, 2, 2, 2], rng), |t, v| avgpool2d(v[0], 2)?),
        "global_avg_pool" => {
            check!([normal(&[2, 3, 3, 3], rng)], normal(&[2, 3], rng), |t, v| global_avg_pool(v[0])?)
        }
        "upsample_nearest" => check!([normal(&[1, 2, 3, 3], rng)], normal(&[1, 2, 6, 6], rng), |t, v| {
            upsample_nearest(v[0], 2)?
        }),
        "concat" => check!(
            [normal(&[2, 1, 3, 3], rng), normal(&[2, 2, 3, 3], rng)],
            normal(&[2, 3, 3, 3], rng),
            |t, v| concat(&[v[0], v[1]], 1)?
        ),
        "narrow" => check!([normal(&[2, 4, 3], rng)], normal(&[2, 2, 3], rng), |t, v| narrow(v[0], 1, 1, 2)?),
        "pad_edge" => check!([normal(&[1, 2, 3, 3], rng)], normal(&[1, 2, 5, 5], rng), |t, v| pad_edge(v[0], 1)?),
        "dice" | "weighted_dice" => {
            let pred = Tensor::uniform(&[2, 2, 4, 4], 0.0, 1.0, rng);
            let truth = Tensor::from_fn(&[2, 2, 4, 4], |_| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
            if name == "dice" {
                check!([pred], normal(&[2, 2], rng), |t, v| dice_scores(v[0], &truth, 1.0)?)
            } else {
                scalar!([pred], |t, v| Ok(weighted_dice_loss(v[0], &truth, 0.4, 0.6, 1.0)?.weighted))
            }
        }
        "rec_loss" => {
            let image = Tensor::uniform(&[2, 3, 4, 4], 0.0, 1.0, rng);
            let pred = image.zip_map(&off_kink(&[2, 3, 4, 4], rng), |a, b| a + 0.3 * b)?;
            scalar!([pred], |t, v| rec_loss(&image, v[0]))
        }
        "composite_loss" => composite(rng, opts),
        other => Err(Error::invalid(format!("no check registered for `{other}`"))),
    }
}

/// Total training loss of a small model with respect to every parameter
/// (a random subset of entries each) and the input image.
fn composite(rng: &mut ChaCha8Rng, opts: &GradCheckOptions) -> Result<(f64, usize)> {
    let cfg = ModelConfig::small();
    let params = init_params(&cfg, rng.random())?;
    let n = 2;
    let image = Tensor::uniform(&[n, 3, 8, 8], 0.0, 1.0, rng);
    let masks = Tensor::from_fn(&[n, 2, 8, 8], |_| if rng.random_bool(0.3) { 1.0 } else { 0.0 });
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.n_domains)).collect();
    let mut inputs: Vec<Tensor> = params.params().iter().map(|p| p.value.clone()).collect();
    inputs.push(image.clone());
    let count = params.params().len();
    let r = grad_check_with(
        |_tape: &Tape, v: &[Var<'_>]| -> Result<Var<'_>> {
            let mut local = params.clone();
            let mut net = local.network(&v[..count], Mode::Train);
            let out = net.forward(v[count])?;
            let seg = weighted_dice_loss(out.seg, &masks, 0.4, 0.6, 1.0)?.weighted;
            let rec = rec_loss(&image, out.rec.expect("multitask head"))?;
            let cls = cls_loss(out.cls_logits.expect("multitask head"), &labels)?;
            seg.scale(2.0).add(rec.scale(0.5))?.add(cls.scale(0.5))
        },
        &inputs,
        opts,
    )?;
    Ok((r.max_rel_error, r.entries_checked))
}
