use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stacked images (N×3×H×W), masks (N×2×H×W, disc then cup) and domains.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub masks: Tensor,
    pub domains: Vec<usize>,
}

pub fn make_batch(samples: &[&Sample]) -> Result<Batch> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("cannot batch zero samples"))?;
    let (h, w) = (first.height(), first.width());
    let plane = h * w;
    let mut images = Vec::with_capacity(samples.len() * 3 * plane);
    let mut masks = Vec::with_capacity(samples.len() * 2 * plane);
    for s in samples {
        if (s.height(), s.width()) != (h, w) {
            return Err(Error::shape(
                "batch",
                format!("sample {} is {}x{}, batch is {h}x{w}", s.id, s.height(), s.width()),
            ));
        }
        images.extend_from_slice(s.image.data());
        masks.extend(s.od.to_f64());
        masks.extend(s.oc.to_f64());
    }
    let n = samples.len();
    Ok(Batch {
        images: Tensor::new(&[n, 3, h, w], images)?,
        masks: Tensor::new(&[n, 2, h, w], masks)?,
        domains: samples.iter().map(|s| s.domain).collect(),
    })
}

/// Index batches for one epoch, shuffled deterministically from
/// (`seed`, `epoch`). With `balanced`, each domain's indices are shuffled
/// separately and dealt round-robin so every batch mixes domains as evenly
/// as the counts allow. The last batch may be short.
pub fn epoch_batches(
    domains: &[usize],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    balanced: bool,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if batch_size > domains.len() {
        return Err(Error::invalid(format!(
            "batch size {batch_size} exceeds the {} available samples",
            domains.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let order: Vec<usize> = if balanced {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &d) in domains.iter().enumerate() {
            groups.entry(d).or_default().push(i);
        }
        let mut queues: Vec<Vec<usize>> = groups.into_values().collect();
        for q in &mut queues {
            q.shuffle(&mut rng);
        }
        let longest = queues.iter().map(Vec::len).max().unwrap_or(0);
        (0..longest)
            .flat_map(|k| queues.iter().filter_map(move |q| q.get(k).copied()))
            .collect()
    } else {
        let mut all: Vec<usize> = (0..domains.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_fixed_order() {
        let d = vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        assert_eq!(epoch_batches(&d, 4, 3, 0, true).unwrap(), epoch_batches(&d, 4, 3, 0, true).unwrap());
        assert_ne!(epoch_batches(&d, 4, 3, 0, false).unwrap(), epoch_batches(&d, 4, 3, 1, false).unwrap());
    }

    #[test]
    fn balanced_batches_split_evenly() {
        let d: Vec<usize> = (0..27).map(|i| i % 3).collect();
        for batch in epoch_batches(&d, 9, 1, 0, true).unwrap() {
            for dom in 0..3 {
                assert_eq!(batch.iter().filter(|&&i| d[i] == dom).count(), 3);
            }
        }
    }

    #[test]
    fn epoch_covers_every_sample_once() {
        let d = vec![0, 0, 0, 0, 1, 1, 2];
        for balanced in [false, true] {
            let mut seen: Vec<usize> = epoch_batches(&d, 3, 5, 2, balanced).unwrap().concat();
            seen.sort_unstable();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batch_larger_than_dataset_is_an_error() {
        assert!(epoch_batches(&[0, 1], 3, 0, 0, true).is_err());
        assert!(epoch_batches(&[0, 1], 0, 0, 0, true).is_err());
    }
}
