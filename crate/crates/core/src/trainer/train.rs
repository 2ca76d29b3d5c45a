use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::eval::validation_dice;
use super::history::{HistoryRow, RunSummary};
use super::optim::{cosine_lr, optimizer_step, Adam};
use crate::autograd::{Mode, Tape};
use crate::data::{channel_means, crop_resize, epoch_batches, make_batch, Augmenter, Batch, Sample};
use crate::error::{Error, Result};
use crate::losses::{cls_loss, rec_loss, weighted_dice_loss, LossReport};
use crate::model::{init_params, Group, ModelParams};

const VAL_STREAM: u64 = 1 << 32;
const AUG_STREAM: u64 = 2 << 32;

pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<HistoryRow>,
    pub summary: RunSummary,
}

/// Resizes every sample to `size`×`size` around the disc, using the largest
/// square that fits. Samples already at that size pass through unchanged.
pub fn prepare_samples(samples: &[Sample], size: usize) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            if s.height() == size && s.width() == size {
                Ok(s.clone())
            } else {
                crop_resize(s, s.height().min(s.width()), size)
            }
        })
        .collect()
}

/// Splits indices into (train, validation), holding out `fraction` of each
/// domain (at least one sample when the fraction is positive and the domain
/// has two or more).
pub fn stratified_split(domains: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &d) in domains.iter().enumerate() {
        groups.entry(d).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(VAL_STREAM);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let mut k = (fraction * idx.len() as f64).round() as usize;
        if fraction > 0.0 && idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        }
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains a fresh model on `samples`, which must not contain the unseen
/// domain.
pub fn train(config: &RunConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    train_with(config, samples, |_, _| {})
}

/// [`train`] with a callback after each stage, given the 1-based stage
/// number and the parameters at that point.
pub fn train_with(
    config: &RunConfig,
    samples: &[Sample],
    mut on_stage_end: impl FnMut(usize, &ModelParams),
) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(s) = samples.iter().find(|s| s.domain == config.unseen_domain) {
        return Err(Error::invalid(format!(
            "sample `{}` belongs to the unseen domain {}",
            s.id, config.unseen_domain
        )));
    }
    if config.model.use_multitask {
        if let Some(s) = samples.iter().find(|s| s.domain >= config.model.n_domains) {
            return Err(Error::invalid(format!(
                "sample `{}` has domain {} but the classifier knows {}",
                s.id, s.domain, config.model.n_domains
            )));
        }
    }
    let samples = prepare_samples(samples, config.image_size)?;
    let domains: Vec<usize> = samples.iter().map(|s| s.domain).collect();
    let (train_idx, val_idx) = stratified_split(&domains, config.val_fraction, config.seed);
    let train_set: Vec<&Sample> = train_idx.iter().map(|&i| &samples[i]).collect();
    let val_set: Vec<Sample> = val_idx.iter().map(|&i| samples[i].clone()).collect();
    let train_domains: Vec<usize> = train_set.iter().map(|s| s.domain).collect();
    let owned: Vec<Sample> = train_set.iter().map(|&s| s.clone()).collect();
    let augmenter = config
        .augment
        .clone()
        .map(|a| Augmenter::new(a, channel_means(&owned)));

    let mut params = init_params(&config.model, config.seed)?;
    let mut adam = Adam::new(&params);
    let mut history = Vec::new();
    let mut epoch = 0usize;
    let mut steps = 0usize;
    let mut last = LossReport::default();
    let mut last_val = (None, None);

    for (si, stage) in config.stages.iter().enumerate() {
        params.set_frozen(Group::Backbone, stage.freeze_backbone);
        let weights = stage.weights(config.alpha, config.beta);
        let per_epoch = train_domains.len().div_ceil(config.batch_size);
        let stage_steps = per_epoch * stage.epochs;
        let mut stage_step = 0usize;
        for _ in 0..stage.epochs {
            let batches = epoch_batches(
                &train_domains,
                config.batch_size,
                config.seed,
                epoch as u64,
                config.balanced,
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(AUG_STREAM + epoch as u64);
            let first_lr = cosine_lr(stage.base_lr, stage_step, stage_steps);
            let mut sums = [0.0f64; 6];
            let mut seen = 0usize;
            for (bi, idx) in batches.iter().enumerate() {
                let picked: Vec<Sample> = idx
                    .iter()
                    .map(|&i| match &augmenter {
                        Some(a) => a.apply(train_set[i], &mut rng),
                        None => train_set[i].clone(),
                    })
                    .collect();
                let refs: Vec<&Sample> = picked.iter().collect();
                let batch = make_batch(&refs)?;
                if let Some(&d) = batch.domains.iter().find(|&&d| d == config.unseen_domain) {
                    return Err(Error::invalid(format!("unseen domain {d} reached a gradient step")));
                }
                let lr = cosine_lr(stage.base_lr, stage_step, stage_steps);
                let report = step(&mut params, &mut adam, &batch, config, &weights, lr).map_err(|e| match e {
                    Error::NonFinite(m) => {
                        Error::NonFinite(format!("{m} (epoch {}, batch {})", epoch + 1, bi + 1))
                    }
                    other => other,
                })?;
                let n = idx.len() as f64;
                for (s, v) in sums
                    .iter_mut()
                    .zip([report.total, report.seg, report.seg_od, report.seg_oc, report.rec, report.cls])
                {
                    *s += v * n;
                }
                seen += idx.len();
                stage_step += 1;
                steps += 1;
            }
            let mean = sums.map(|s| s / seen as f64);
            last = LossReport {
                total: mean[0],
                seg: mean[1],
                seg_od: mean[2],
                seg_oc: mean[3],
                rec: mean[4],
                cls: mean[5],
            };
            last_val = if val_set.is_empty() {
                (None, None)
            } else {
                let (od, oc) = validation_dice(&params, &val_set, config.threshold)?;
                (Some(od), Some(oc))
            };
            epoch += 1;
            history.push(HistoryRow {
                epoch,
                stage: si + 1,
                lr: first_lr,
                total: last.total,
                seg: last.seg,
                rec: last.rec,
                cls: last.cls,
                val_dsc_od: last_val.0.unwrap_or(f64::NAN),
                val_dsc_oc: last_val.1.unwrap_or(f64::NAN),
            });
        }
        on_stage_end(si + 1, &params);
    }
    params.set_frozen(Group::Backbone, false);

    let summary = RunSummary {
        config_hash: config.hash(),
        config: config.clone(),
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        steps,
        parameters: params.num_scalars(),
        final_loss: last,
        val_dsc_od: last_val.0,
        val_dsc_oc: last_val.1,
    };
    Ok(TrainOutcome {
        params,
        history,
        summary,
    })
}

/// Forward, backward and one Adam update on a single batch.
fn step(
    params: &mut ModelParams,
    adam: &mut Adam,
    batch: &Batch,
    config: &RunConfig,
    weights: &crate::losses::LossWeights,
    lr: f64,
) -> Result<LossReport> {
    let tape = Tape::new();
    let vars = params.bind(&tape);
    let x = tape.constant(batch.images.clone());
    let out = params.network(&vars, Mode::Train).forward(x)?;
    let dice = weighted_dice_loss(out.seg, &batch.masks, config.alpha, config.beta, config.smooth)?;
    let mut loss = dice.weighted.scale(weights.lambda_seg);
    let (mut rec_v, mut cls_v) = (0.0, 0.0);
    if let (Some(rec), Some(logits)) = (out.rec, out.cls_logits) {
        let rec = rec_loss(&batch.images, rec)?;
        let cls = cls_loss(logits, &batch.domains)?;
        rec_v = rec.item()?;
        cls_v = cls.item()?;
        loss = loss
            .add(rec.scale(weights.lambda_rec))?
            .add(cls.scale(weights.lambda_cls))?;
    }
    let total = loss.item()?;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("training loss {total}")));
    }
    let mut grads = tape.backward(loss)?;
    let grads: Vec<_> = params
        .params()
        .iter()
        .zip(&vars)
        .map(|(p, &v)| if p.frozen { None } else { grads.take(v) })
        .collect();
    optimizer_step(params, &grads, adam, lr)?;
    params.round_stats_to_f32();
    Ok(LossReport::new(dice.od, dice.oc, rec_v, cls_v, weights))
}
