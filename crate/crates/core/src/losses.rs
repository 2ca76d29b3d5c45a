//! Segmentation, reconstruction and domain-classification losses.

use serde::{Deserialize, Serialize};

use crate::autograd::{cross_entropy_with_logits, narrow, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SMOOTH: f64 = 1.0;

/// Structure weights of the dice loss and per-task coefficients of the total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_seg: f64,
    pub lambda_rec: f64,
    pub lambda_cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.4,
            beta: 0.6,
            lambda_seg: 1.0,
            lambda_rec: 1.0,
            lambda_cls: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.lambda_seg, self.lambda_rec, self.lambda_cls];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("loss weights must be finite".into()));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "alpha and beta must be positive, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.lambda_seg < 0.0 || self.lambda_rec < 0.0 || self.lambda_cls < 0.0 {
            return Err(Error::Config("task coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub seg: f64,
    pub seg_od: f64,
    pub seg_oc: f64,
    pub rec: f64,
    pub cls: f64,
}

/// Soft dice `(2Σpt + s) / (Σp + Σt + s)` of one probability map against a
/// binary target, as plain numbers.
pub fn soft_dice(pred: &[f64], truth: &[f64], smooth: f64) -> f64 {
    let (mut inter, mut sp, mut st) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        inter += p * t;
        sp += p;
        st += t;
    }
    (2.0 * inter + smooth) / (sp + st + smooth)
}

/// Soft dice of every (n, c) map of an N×C×H×W prediction against a
/// same-shape target, giving an N×C variable.
pub fn dice_scores<'t>(pred: Var<'t>, truth: &Tensor, smooth: f64) -> Result<Var<'t>> {
    let p = pred.value();
    let (n, c, h, w) = p.dims4("dice")?;
    if truth.shape() != p.shape() {
        return Err(Error::shape(
            "dice",
            format!("prediction {:?} vs target {:?}", p.shape(), truth.shape()),
        ));
    }
    if !(smooth > 0.0) {
        return Err(Error::invalid(format!("dice smoothing must be positive, got {smooth}")));
    }
    let m = h * w;
    let mut sums = Vec::with_capacity(n * c);
    let mut scores = Vec::with_capacity(n * c);
    for (ps, ts) in p.data().chunks_exact(m).zip(truth.data().chunks_exact(m)) {
        let (mut inter, mut sp, mut st) = (0.0, 0.0, 0.0);
        for (&a, &b) in ps.iter().zip(ts) {
            inter += a * b;
            sp += a;
            st += b;
        }
        let num = 2.0 * inter + smooth;
        let den = sp + st + smooth;
        sums.push((num, den));
        scores.push(num / den);
    }
    let truth = truth.clone();
    let value = Tensor::from_parts(vec![n, c], scores);
    Ok(pred.tape().record(
        "dice",
        &[pred],
        value,
        Box::new(move |_, g| {
            // d/dp [num/den] = (2t·den − num) / den²
            let mut dx = vec![0.0; n * c * m];
            for (s, (ds, ts)) in dx.chunks_exact_mut(m).zip(truth.data().chunks_exact(m)).enumerate() {
                let (num, den) = sums[s];
                let gs = g.data()[s] / (den * den);
                for (d, &t) in ds.iter_mut().zip(ts) {
                    *d = gs * (2.0 * t * den - num);
                }
            }
            vec![Some(Tensor::from_parts(vec![n, c, h, w], dx))]
        }),
    ))
}

/// Per-structure dice losses `1 − mean_n dice` for channel 0 (disc) and
/// channel 1 (cup), and their weighted sum `α·od + β·oc`.
pub struct DiceLoss<'t> {
    pub weighted: Var<'t>,
    pub od: f64,
    pub oc: f64,
}

pub fn weighted_dice_loss<'t>(
    pred: Var<'t>,
    truth: &Tensor,
    alpha: f64,
    beta: f64,
    smooth: f64,
) -> Result<DiceLoss<'t>> {
    let c = pred.value().dims4("weighted_dice")?.1;
    if c != 2 {
        return Err(Error::shape(
            "weighted_dice",
            format!("expected 2 channels (disc, cup), got {c}"),
        ));
    }
    let scores = dice_scores(pred, truth, smooth)?;
    let od = narrow(scores, 1, 0, 1)?.mean().scale(-1.0).add_scalar(1.0);
    let oc = narrow(scores, 1, 1, 1)?.mean().scale(-1.0).add_scalar(1.0);
    let (od_v, oc_v) = (od.item()?, oc.item()?);
    let weighted = od.scale(alpha).add(oc.scale(beta))?;
    Ok(DiceLoss {
        weighted,
        od: od_v,
        oc: oc_v,
    })
}

/// Mean absolute error between the reconstruction and the image mapped to
/// the tanh range by `2x − 1`.
pub fn rec_loss<'t>(image: &Tensor, recon: Var<'t>) -> Result<Var<'t>> {
    if image.shape() != recon.value().shape() {
        return Err(Error::shape(
            "rec_loss",
            format!("image {:?} vs reconstruction {:?}", image.shape(), recon.value().shape()),
        ));
    }
    let target = recon.tape().constant(image.map(|v| 2.0 * v - 1.0));
    Ok(recon.sub(target)?.abs().mean())
}

/// Mean negative log-likelihood of the true domain under softmax(logits).
pub fn cls_loss<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    cross_entropy_with_logits(logits, labels)
}

/// Combines component losses with the task coefficients.
pub fn total_loss(seg: f64, rec: f64, cls: f64, w: &LossWeights) -> f64 {
    w.lambda_seg * seg + w.lambda_rec * rec + w.lambda_cls * cls
}

impl LossReport {
    pub fn new(seg_od: f64, seg_oc: f64, rec: f64, cls: f64, w: &LossWeights) -> Self {
        let seg = w.alpha * seg_od + w.beta * seg_oc;
        LossReport {
            total: total_loss(seg, rec, cls, w),
            seg,
            seg_od,
            seg_oc,
            rec,
            cls,
        }
    }
}
