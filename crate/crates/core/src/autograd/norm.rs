use serde::{Deserialize, Serialize};

use super::tape::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Whether batch statistics or running statistics drive batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running mean and variance of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    initialized: bool,
}

impl RunningStats {
    /// Unseeded statistics; eval-mode use fails until a train step runs.
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            initialized: false,
        }
    }

    /// Explicitly seeded statistics, usable in eval mode immediately.
    pub fn seeded(mean: Vec<f64>, var: Vec<f64>) -> Self {
        assert_eq!(mean.len(), var.len());
        RunningStats {
            mean,
            var,
            initialized: true,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Folds one batch's statistics in. The first update adopts the batch
    /// statistics outright; later ones blend with `momentum`.
    fn update(&mut self, mean: &[f64], unbiased_var: &[f64], momentum: f64) {
        if !self.initialized {
            self.mean.copy_from_slice(mean);
            self.var.copy_from_slice(unbiased_var);
            self.initialized = true;
            return;
        }
        for (r, m) in self.mean.iter_mut().zip(mean) {
            *r = (1.0 - momentum) * *r + momentum * m;
        }
        for (r, v) in self.var.iter_mut().zip(unbiased_var) {
            *r = (1.0 - momentum) * *r + momentum * v;
        }
    }

    pub fn round_to_f32(&mut self) {
        for v in self.mean.iter_mut().chain(self.var.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

fn inv_std(var: f64, eps: f64) -> f64 {
    let d = var + eps;
    if d > 0.0 {
        1.0 / d.sqrt()
    } else {
        0.0
    }
}

/// Normalizes each (n, c) slice to zero mean and unit variance.
pub fn instance_norm(input: Var<'_>, eps: f64) -> Result<Var<'_>> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("instance_norm eps must be >= 0, got {eps}")));
    }
    let x = input.value();
    let (n, c, h, w) = x.dims4("instance_norm")?;
    let m = h * w;
    let mut out = vec![0.0; x.numel()];
    let mut inv = vec![0.0; n * c];
    for (s, (src, dst)) in x.data().chunks_exact(m).zip(out.chunks_exact_mut(m)).enumerate() {
        let mean = src.iter().sum::<f64>() / m as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        let is = inv_std(var, eps);
        inv[s] = is;
        for (d, v) in dst.iter_mut().zip(src) {
            *d = (v - mean) * is;
        }
    }
    let value = Tensor::from_parts(vec![n, c, h, w], out);
    Ok(input.tape().record(
        "instance_norm",
        &[input],
        value,
        Box::new(move |ctx, g| {
            let y = ctx.output.data();
            let mut dx = vec![0.0; y.len()];
            for (s, ((gs, ys), ds)) in g
                .data()
                .chunks_exact(m)
                .zip(y.chunks_exact(m))
                .zip(dx.chunks_exact_mut(m))
                .enumerate()
            {
                normalize_backward(gs, ys, inv[s], ds);
            }
            vec![Some(Tensor::from_parts(g.shape().to_vec(), dx))]
        }),
    ))
}

/// `dx = inv_std · (g − mean(g) − y · mean(g·y))` for one normalized group.
fn normalize_backward(g: &[f64], y: &[f64], inv_std: f64, dx: &mut [f64]) {
    let m = g.len() as f64;
    let mean_g = g.iter().sum::<f64>() / m;
    let mean_gy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / m;
    for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
        *d = inv_std * (gi - mean_g - yi * mean_gy);
    }
}

/// Per-channel normalization over (N, H, W).
///
/// Train mode normalizes with batch statistics and folds them into `stats`;
/// eval mode applies `stats` as a fixed affine map.
pub fn batch_norm<'t>(
    input: Var<'t>,
    eps: f64,
    mode: Mode,
    stats: &mut RunningStats,
    momentum: f64,
) -> Result<Var<'t>> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("batch_norm eps must be >= 0, got {eps}")));
    }
    let x = input.value();
    let (n, c, h, w) = x.dims4("batch_norm")?;
    if stats.channels() != c {
        return Err(Error::shape(
            "batch_norm",
            format!("input has {c} channels, running stats have {}", stats.channels()),
        ));
    }
    let hw = h * w;
    let count = n * hw;
    let xd = x.data();
    let channel_iter = |ch: usize| (0..n).flat_map(move |b| (b * c + ch) * hw..(b * c + ch + 1) * hw);

    let (mean, inv): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => {
            if count < 2 {
                return Err(Error::invalid(format!(
                    "batch_norm in train mode needs at least 2 values per channel, got {count}"
                )));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mu = channel_iter(ch).map(|i| xd[i]).sum::<f64>() / count as f64;
                let v = channel_iter(ch).map(|i| (xd[i] - mu) * (xd[i] - mu)).sum::<f64>()
                    / count as f64;
                mean[ch] = mu;
                var[ch] = v;
            }
            let unbiased: Vec<f64> = var
                .iter()
                .map(|v| v * count as f64 / (count - 1) as f64)
                .collect();
            stats.update(&mean, &unbiased, momentum);
            let inv = var.iter().map(|&v| inv_std(v, eps)).collect();
            (mean, inv)
        }
        Mode::Eval => {
            if !stats.is_initialized() {
                return Err(Error::UninitializedStats("batch_norm".into()));
            }
            let inv = stats.var.iter().map(|&v| inv_std(v, eps)).collect();
            (stats.mean.clone(), inv)
        }
    };

    let mut out = vec![0.0; xd.len()];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * hw..(b * c + ch + 1) * hw;
            for i in range {
                out[i] = (xd[i] - mean[ch]) * inv[ch];
            }
        }
    }
    let value = Tensor::from_parts(vec![n, c, h, w], out);
    Ok(input.tape().record(
        "batch_norm",
        &[input],
        value,
        Box::new(move |ctx, g| {
            let gd = g.data();
            let mut dx = vec![0.0; gd.len()];
            match mode {
                Mode::Eval => {
                    for b in 0..n {
                        for ch in 0..c {
                            for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                                dx[i] = gd[i] * inv[ch];
                            }
                        }
                    }
                }
                Mode::Train => {
                    let y = ctx.output.data();
                    let m = count as f64;
                    for ch in 0..c {
                        let mut sum_g = 0.0;
                        let mut sum_gy = 0.0;
                        for b in 0..n {
                            for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                                sum_g += gd[i];
                                sum_gy += gd[i] * y[i];
                            }
                        }
                        let (mean_g, mean_gy) = (sum_g / m, sum_gy / m);
                        for b in 0..n {
                            for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                                dx[i] = inv[ch] * (gd[i] - mean_g - y[i] * mean_gy);
                            }
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(g.shape().to_vec(), dx))]
        }),
    ))
}

/// `y[n,c,h,w] = scale[c] · x[n,c,h,w] + shift[c]`.
pub fn channel_affine<'t>(input: Var<'t>, scale: Var<'t>, shift: Var<'t>) -> Result<Var<'t>> {
    let x = input.value();
    let (n, c, h, w) = x.dims4("channel_affine")?;
    let (s, t) = (scale.value(), shift.value());
    if s.shape() != [c] || t.shape() != [c] {
        return Err(Error::shape(
            "channel_affine",
            format!(
                "scale {:?} / shift {:?} must both be [{c}]",
                s.shape(),
                t.shape()
            ),
        ));
    }
    let hw = h * w;
    let mut out = vec![0.0; x.numel()];
    for (plane, (src, dst)) in x.data().chunks_exact(hw).zip(out.chunks_exact_mut(hw)).enumerate() {
        let ch = plane % c;
        let (a, b) = (s.data()[ch], t.data()[ch]);
        for (d, v) in dst.iter_mut().zip(src) {
            *d = a * v + b;
        }
    }
    let value = Tensor::from_parts(vec![n, c, h, w], out);
    Ok(input.tape().record(
        "channel_affine",
        &[input, scale, shift],
        value,
        Box::new(move |ctx, g| {
            let (x, s) = (ctx.inputs[0], ctx.inputs[1]);
            let gd = g.data();
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![0.0; gd.len()];
                for (plane, (gs, ds)) in gd.chunks_exact(hw).zip(dx.chunks_exact_mut(hw)).enumerate() {
                    let a = s.data()[plane % c];
                    for (d, v) in ds.iter_mut().zip(gs) {
                        *d = a * v;
                    }
                }
                Tensor::from_parts(x.shape().to_vec(), dx)
            });
            let ds = ctx.needs[1].then(|| {
                let mut acc = vec![0.0; c];
                for (plane, (gs, xs)) in gd.chunks_exact(hw).zip(x.data().chunks_exact(hw)).enumerate() {
                    acc[plane % c] += gs.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                }
                Tensor::from_parts(vec![c], acc)
            });
            let dt = ctx.needs[2].then(|| {
                let mut acc = vec![0.0; c];
                for (plane, gs) in gd.chunks_exact(hw).enumerate() {
                    acc[plane % c] += gs.iter().sum::<f64>();
                }
                Tensor::from_parts(vec![c], acc)
            });
            vec![dx, ds, dt]
        }),
    ))
}
