use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

/// `base · ½(1 + cos(π · step / total))`.
pub fn cosine_lr(base: f64, step: usize, total_steps: usize) -> f64 {
    let total = total_steps.max(1);
    let frac = step.min(total) as f64 / total as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Adam moments per parameter, indexed like [`ModelParams::params`].
/// Each parameter keeps its own step count, so frozen stretches do not
/// advance its bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    slots: Vec<Option<Slot>>,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            slots: vec![None; params.params().len()],
        }
    }

    /// Step count of parameter `i` (0 if never updated).
    pub fn steps(&self, i: usize) -> u64 {
        self.slots.get(i).and_then(|s| s.as_ref()).map_or(0, |s| s.t)
    }
}

/// One Adam update of every unfrozen parameter. Frozen parameters and their
/// moments are left untouched. All gradients are checked before anything
/// changes, so a non-finite gradient leaves the model as it was.
/// Updated values are rounded to `f32` so checkpoints hold them exactly.
pub fn optimizer_step(params: &mut ModelParams, grads: &[Option<Tensor>], state: &mut Adam, lr: f64) -> Result<()> {
    if grads.len() != params.params().len() || state.slots.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} gradients and {} optimizer slots for {} parameters",
            grads.len(),
            state.slots.len(),
            params.params().len()
        )));
    }
    for (p, g) in params.params().iter().zip(grads) {
        if p.frozen {
            continue;
        }
        let g = g
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("no gradient for unfrozen parameter `{}`", p.name)))?;
        if g.shape() != p.value.shape() {
            return Err(Error::shape(
                "optimizer_step",
                format!("gradient of `{}` is {:?}, parameter is {:?}", p.name, g.shape(), p.value.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of `{}`", p.name)));
        }
    }
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for ((p, g), slot) in params.params_mut().iter_mut().zip(grads).zip(&mut state.slots) {
        if p.frozen {
            continue;
        }
        let g = g.as_ref().expect("checked above");
        let slot = slot.get_or_insert_with(|| Slot {
            m: vec![0.0; g.numel()],
            v: vec![0.0; g.numel()],
            t: 0,
        });
        slot.t += 1;
        let c1 = 1.0 - b1.powi(slot.t as i32);
        let c2 = 1.0 - b2.powi(slot.t as i32);
        for (((w, &gi), m), v) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(&mut slot.m)
            .zip(&mut slot.v)
        {
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            *w = (*w - update) as f32 as f64;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Group, ModelConfig};

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(4e-5, 0, 100), 4e-5);
        assert!(cosine_lr(4e-5, 100, 100).abs() < 1e-20);
        assert!((cosine_lr(1.0, 50, 100) - 0.5).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for s in 0..=10 {
            let lr = cosine_lr(1.0, s, 10);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn grads_like(p: &ModelParams, f: impl Fn(usize) -> f64) -> Vec<Option<Tensor>> {
        p.params()
            .iter()
            .map(|q| Some(Tensor::from_fn(q.value.shape(), &f)))
            .collect()
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = init_params(&ModelConfig::small(), 0).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(&p);
        let g = grads_like(&p, |_| 0.0);
        optimizer_step(&mut p, &g, &mut adam, 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn scalar_recurrence_matches_hand_rolled_adam() {
        let mut p = init_params(&ModelConfig::small(), 0).unwrap();
        let i = p.position("head_cls.linear.bias").unwrap();
        let mut adam = Adam::new(&p);
        let (lr, b1, b2, eps) = (0.01, 0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for t in 1..=3 {
            let g = grads_like(&p, |_| 1.0);
            optimizer_step(&mut p, &g, &mut adam, lr).unwrap();
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            let got = p.params()[i].value.data()[0];
            assert!((got - w).abs() < 1e-7, "step {t}: {got} vs {w}");
        }
        assert_eq!(adam.steps(i), 3);
    }

    #[test]
    fn frozen_group_is_bit_identical() {
        let mut p = init_params(&ModelConfig::small(), 0).unwrap();
        p.set_frozen(Group::Backbone, true);
        let before: Vec<Tensor> = p.group(Group::Backbone).map(|q| q.value.clone()).collect();
        let mut adam = Adam::new(&p);
        for _ in 0..3 {
            let g = grads_like(&p, |k| (k as f64).sin());
            optimizer_step(&mut p, &g, &mut adam, 0.05).unwrap();
        }
        let after: Vec<Tensor> = p.group(Group::Backbone).map(|q| q.value.clone()).collect();
        assert_eq!(before, after);
        let first = p.position("backbone.stage0.conv.weight").unwrap();
        assert_eq!(adam.steps(first), 0);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut p = init_params(&ModelConfig::small(), 0).unwrap();
        let before = p.clone();
        let mut grads = grads_like(&p, |_| 0.5);
        let i = p.position("head_seg.out.bias").unwrap();
        grads[i] = Some(Tensor::full(p.params()[i].value.shape(), f64::NAN));
        let mut adam = Adam::new(&p);
        let err = optimizer_step(&mut p, &grads, &mut adam, 0.1).unwrap_err();
        assert!(err.to_string().contains("head_seg.out.bias"), "{err}");
        assert_eq!(err.exit_code(), 3);
        assert_eq!(p, before);
    }
}
