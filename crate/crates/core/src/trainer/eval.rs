use super::train::prepare_samples;
use crate::autograd::{Mode, Tape};
use crate::data::{make_batch, Sample};
use crate::error::Result;
use crate::metrics::{asd, dsc, hausdorff, BinaryMask, Connectivity, MetricRecord, Structure};
use crate::model::ModelParams;
use crate::parallel::{parallel_map, threads};
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 8;

/// Eval-mode segmentation probabilities (N×2×H×W) for an N×3×H×W batch.
pub fn predict(params: &ModelParams, images: &Tensor) -> Result<Tensor> {
    let mut local = params.clone();
    let tape = Tape::new();
    let vars = local.bind_constants(&tape);
    let x = tape.constant(images.clone());
    let mut net = local.network(&vars, Mode::Eval);
    let adapted = net.adaptor(x)?;
    let enc = net.encoder(adapted)?;
    let seg = net.seg_decoder(&enc)?;
    let out = seg.value();
    Ok((*out).clone())
}

/// Thresholded disc and cup masks for each sample.
pub fn predict_masks(params: &ModelParams, samples: &[Sample], threshold: f64) -> Result<Vec<(BinaryMask, BinaryMask)>> {
    let chunks: Vec<&[Sample]> = samples.chunks(EVAL_CHUNK).collect();
    let parts = parallel_map(&chunks, threads(), |chunk| -> Result<Vec<(BinaryMask, BinaryMask)>> {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = make_batch(&refs)?;
        let probs = predict(params, &batch.images)?;
        let (h, w) = (chunk[0].height(), chunk[0].width());
        let plane = h * w;
        probs
            .data()
            .chunks_exact(2 * plane)
            .map(|p| {
                Ok((
                    BinaryMask::threshold(h, w, &p[..plane], threshold)?,
                    BinaryMask::threshold(h, w, &p[plane..], threshold)?,
                ))
            })
            .collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Mean thresholded dice of disc and cup over `samples`.
pub(crate) fn validation_dice(params: &ModelParams, samples: &[Sample], threshold: f64) -> Result<(f64, f64)> {
    let masks = predict_masks(params, samples, threshold)?;
    let (mut od, mut oc) = (0.0, 0.0);
    for (s, (d, c)) in samples.iter().zip(&masks) {
        od += dsc(d, &s.od)?;
        oc += dsc(c, &s.oc)?;
    }
    let n = samples.len() as f64;
    Ok((od / n, oc / n))
}

/// Dice, Hausdorff and average surface distance of every sample, disc
/// record first, then cup. Samples are resized to `image_size` first.
/// `domain` in each record is the sample's own domain.
pub fn evaluate(
    params: &ModelParams,
    samples: &[Sample],
    image_size: usize,
    threshold: f64,
    run_id: &str,
    connectivity: Connectivity,
) -> Result<Vec<MetricRecord>> {
    let samples = prepare_samples(samples, image_size)?;
    let masks = predict_masks(params, &samples, threshold)?;
    let mut records = Vec::with_capacity(2 * samples.len());
    for (s, (d, c)) in samples.iter().zip(&masks) {
        for (structure, pred, truth) in [(Structure::Disc, d, &s.od), (Structure::Cup, c, &s.oc)] {
            records.push(MetricRecord {
                run_id: run_id.to_string(),
                domain: s.domain,
                sample_id: s.id.clone(),
                structure,
                dsc: dsc(pred, truth)?,
                hd: hausdorff(pred, truth, connectivity)?,
                asd: asd(pred, truth, connectivity)?,
            });
        }
    }
    Ok(records)
}

/// Adaptor output of each C×H×W image, run one image per batch. Train mode
/// normalizes the adaptor's batch norm with each image's own statistics and
/// leaves `params` untouched.
pub fn adapt_images(params: &ModelParams, images: &[Tensor], mode: Mode) -> Result<Vec<Tensor>> {
    let mut local = params.clone();
    images
        .iter()
        .map(|img| {
            let mut shape = vec![1];
            shape.extend_from_slice(img.shape());
            let tape = Tape::new();
            let vars = local.bind_constants(&tape);
            let x = tape.constant(img.reshape(&shape)?);
            let y = local.network(&vars, mode).adaptor(x)?;
            y.value().reshape(img.shape())
        })
        .collect()
}
