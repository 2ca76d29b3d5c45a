//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many entries per input (chosen at random).
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            tol: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tol: f64,
    /// (input index, flat entry index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

/// Relative error of one entry. Entries far below the input's overall
/// gradient scale are compared against `1e-3 · scale` instead of their own
/// magnitude, so near-zero derivatives do not amplify rounding noise.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let floor = (1e-3 * scale).max(1e-10);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks every entry of every input; see [`grad_check_with`].
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    grad_check_with(
        f,
        inputs,
        &GradCheckOptions {
            h,
            tol,
            ..Default::default()
        },
    )
}

/// Compares the tape gradient of scalar `f` at `inputs` with central
/// differences `(f(x + h) − f(x − h)) / 2h`, entry by entry.
pub fn grad_check_with<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(opts.h > 0.0) {
        return Err(Error::invalid("grad_check step h must be positive"));
    }
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&tape, &vars)?;
        let value = out.value();
        if value.numel() != 1 {
            return Err(Error::shape(
                "grad_check",
                format!("function must return a scalar, got shape {:?}", value.shape()),
            ));
        }
        if !value.all_finite() {
            return Err(Error::NonFinite("grad_check: f is not finite at the inputs".into()));
        }
        let grads = tape.backward(out)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars)?.item()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        tol: opts.tol,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, grad) in analytic.iter().enumerate() {
        let n = grad.numel();
        let entries: Vec<usize> = match opts.max_entries {
            Some(m) if m < n => {
                let mut idx = sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let mut numeric = Vec::with_capacity(entries.len());
        for &e in &entries {
            let orig = work[which].data()[e];
            work[which].data_mut()[e] = orig + opts.h;
            let plus = eval(&work)?;
            work[which].data_mut()[e] = orig - opts.h;
            let minus = eval(&work)?;
            work[which].data_mut()[e] = orig;
            numeric.push((plus - minus) / (2.0 * opts.h));
        }
        let scale = entries
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (&e, n)| m.max(grad.data()[e].abs()).max(n.abs()));
        for (&e, &num) in entries.iter().zip(&numeric) {
            let a = grad.data()[e];
            let err = relative_error(a, num, scale);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((which, e));
                report.analytic = a;
                report.numeric = num;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_matches_closed_form() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let r = grad_check(|_, v| Ok(v[0].square().sum()), &[x], 1e-5, 1e-7).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.entries_checked, 2);
    }

    #[test]
    fn relu_sum_matches_sign_mask() {
        let x = Tensor::new(&[4], vec![-0.7, 0.2, 1.3, -2.0]).unwrap();
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let g = tape.backward(v.relu().sum()).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
        let r = grad_check(|_, v| Ok(v[0].relu().sum()), &[x], 1e-5, 1e-7).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn non_scalar_function_is_an_error() {
        let x = Tensor::ones(&[3]);
        assert!(grad_check(|_, v| Ok(v[0].relu()), &[x], 1e-5, 1e-4).is_err());
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // x * stop_gradient(x): analytic slope x, numeric slope 2x.
        let x = Tensor::new(&[1], vec![0.5]).unwrap();
        let r = grad_check(
            |tape, v| {
                let detached = tape.constant(v[0].value().as_ref().clone());
                v[0].mul(detached).map(|y| y.sum())
            },
            &[x],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!r.passed());
    }
}
