//! Samples, synthetic domains, on-disk datasets, augmentation and batching.

mod batch;
mod codec;
mod layout;
mod manifest;
mod synth;
mod transform;

pub use batch::{epoch_batches, make_batch, Batch};
pub use codec::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use layout::{
    list_domains, load_split, load_training_domains, manifest_path, split_dir, train_test_split,
    write_synthetic_dataset, TRAIN_FRACTION,
};
pub use manifest::{load_dataset, save_split, DatasetManifest, ManifestEntry, Split};
pub use synth::{generate_domain, DomainSpec};
pub use transform::{crop_resize, AugmentConfig, Augmenter};

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::tensor::Tensor;

/// One RGB image in [0, 1] (3×H×W) with disc and cup masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub od: BinaryMask,
    pub oc: BinaryMask,
    pub domain: usize,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor, od: BinaryMask, oc: BinaryMask, domain: usize) -> Result<Self> {
        let (c, h, w) = match *image.shape() {
            [c, h, w] => (c, h, w),
            _ => {
                return Err(Error::shape(
                    "sample",
                    format!("image must be 3×H×W, got {:?}", image.shape()),
                ))
            }
        };
        if c != 3 {
            return Err(Error::shape("sample", format!("image has {c} channels, expected 3")));
        }
        for (name, m) in [("od", &od), ("oc", &oc)] {
            if (m.height(), m.width()) != (h, w) {
                return Err(Error::shape(
                    "sample",
                    format!("{name} mask is {}x{} but image is {h}x{w}", m.height(), m.width()),
                ));
            }
        }
        Ok(Sample {
            id: id.into(),
            image,
            od,
            oc,
            domain,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

/// Per-channel mean intensity over a set of samples.
pub fn channel_means(samples: &[Sample]) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for s in samples {
        let plane = s.height() * s.width();
        for (c, chunk) in s.image.data().chunks_exact(plane).enumerate() {
            sum[c] += chunk.iter().sum::<f64>();
        }
        n += plane;
    }
    sum.map(|v| if n > 0 { v / n as f64 } else { 0.0 })
}
