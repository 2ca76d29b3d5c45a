//! Region-of-interest cropping and training-time augmentation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::tensor::Tensor;

/// Crops a `roi`×`roi` window centred on the disc-mask centroid (the image
/// centre when the disc mask is empty), clamped inside the image, then
/// resizes to `out`×`out`: bilinear for the image, nearest for masks.
pub fn crop_resize(sample: &Sample, roi: usize, out: usize) -> Result<Sample> {
    let (h, w) = (sample.height(), sample.width());
    if out == 0 {
        return Err(Error::invalid("output size must be positive"));
    }
    if roi == 0 || roi > h.min(w) {
        return Err(Error::invalid(format!("roi {roi} must be in 1..={}", h.min(w))));
    }
    let (cy, cx) = centroid(&sample.od).unwrap_or(((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0));
    let top = ((cy - (roi as f64 - 1.0) / 2.0).round().max(0.0) as usize).min(h - roi);
    let left = ((cx - (roi as f64 - 1.0) / 2.0).round().max(0.0) as usize).min(w - roi);

    let scale = roi as f64 / out as f64;
    let plane = h * w;
    let src = sample.image.data();
    let mut data = vec![0.0; 3 * out * out];
    for i in 0..out {
        let (y0, y1, fy) = bilinear_taps(i, scale, roi);
        for j in 0..out {
            let (x0, x1, fx) = bilinear_taps(j, scale, roi);
            for c in 0..3 {
                let at = |y: usize, x: usize| src[c * plane + (top + y) * w + left + x];
                let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1))
                    + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1));
                data[c * out * out + i * out + j] = v;
            }
        }
    }
    let nearest = |m: &BinaryMask| {
        BinaryMask::from_fn(out, out, |i, j| {
            let y = ((i as f64 * scale) as usize).min(roi - 1);
            let x = ((j as f64 * scale) as usize).min(roi - 1);
            m.get(top + y, left + x)
        })
    };
    Sample::new(
        sample.id.clone(),
        Tensor::new(&[3, out, out], data)?,
        nearest(&sample.od),
        nearest(&sample.oc),
        sample.domain,
    )
}

/// Source taps for output index `i` under half-pixel-centre alignment.
fn bilinear_taps(i: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    (lo, hi, s - lo as f64)
}

fn centroid(m: &BinaryMask) -> Option<(f64, f64)> {
    let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
    for r in 0..m.height() {
        for c in 0..m.width() {
            if m.get(r, c) {
                sy += r as f64;
                sx += c as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sy / n as f64, sx / n as f64))
}

/// Firing probabilities and magnitudes of the four augmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub p_flip: f64,
    pub p_noise: f64,
    pub p_lightness: f64,
    pub p_erase: f64,
    pub max_noise_sigma: f64,
    pub max_lightness_shift: f64,
    pub max_erase_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_flip: 0.5,
            p_noise: 0.5,
            p_lightness: 0.5,
            p_erase: 0.5,
            max_noise_sigma: 0.05,
            max_lightness_shift: 0.2,
            max_erase_fraction: 0.2,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        AugmentConfig {
            p_flip: 0.0,
            p_noise: 0.0,
            p_lightness: 0.0,
            p_erase: 0.0,
            ..Default::default()
        }
    }
}

/// Random flip, Gaussian noise, lightness shift and rectangle erasing.
/// Erased pixels take the per-channel `fill` value (the dataset mean).
#[derive(Clone, Debug)]
pub struct Augmenter {
    pub config: AugmentConfig,
    pub fill: [f64; 3],
}

impl Augmenter {
    pub fn new(config: AugmentConfig, fill: [f64; 3]) -> Self {
        Augmenter { config, fill }
    }

    /// Applies each transform independently with its probability. Masks
    /// only ever follow the flip; noise, lightness and erasing touch the
    /// image alone.
    pub fn apply<R: Rng + ?Sized>(&self, sample: &Sample, rng: &mut R) -> Sample {
        let cfg = &self.config;
        let mut out = sample.clone();
        let (h, w) = (sample.height(), sample.width());
        let plane = h * w;
        if rng.random_bool(cfg.p_flip.clamp(0.0, 1.0)) {
            flip_image(&mut out.image, h, w);
            out.od = out.od.flip_horizontal();
            out.oc = out.oc.flip_horizontal();
        }
        if rng.random_bool(cfg.p_noise.clamp(0.0, 1.0)) {
            let sigma = rng.random_range(0.0..=cfg.max_noise_sigma);
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).unwrap();
                for v in out.image.data_mut() {
                    *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
                }
            }
        }
        if rng.random_bool(cfg.p_lightness.clamp(0.0, 1.0)) {
            let shift = rng.random_range(-cfg.max_lightness_shift..=cfg.max_lightness_shift);
            for v in out.image.data_mut() {
                *v = (*v + shift).clamp(0.0, 1.0);
            }
        }
        if rng.random_bool(cfg.p_erase.clamp(0.0, 1.0)) {
            let frac = rng.random_range(0.0..=cfg.max_erase_fraction);
            let aspect: f64 = rng.random_range(0.5..=2.0);
            let area = frac * plane as f64;
            let eh = ((area * aspect).sqrt().floor() as usize).clamp(1, h);
            let ew = ((area / eh as f64).floor() as usize).clamp(1, w);
            if eh * ew <= (cfg.max_erase_fraction * plane as f64) as usize {
                let top = rng.random_range(0..=h - eh);
                let left = rng.random_range(0..=w - ew);
                let data = out.image.data_mut();
                for c in 0..3 {
                    for r in top..top + eh {
                        let row = c * plane + r * w;
                        data[row + left..row + left + ew].fill(self.fill[c]);
                    }
                }
            }
        }
        out
    }
}

fn flip_image(image: &mut Tensor, h: usize, w: usize) {
    for row in image.data_mut().chunks_exact_mut(w).take(3 * h) {
        row.reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_domain, DomainSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Sample {
        generate_domain(&DomainSpec::preset(0, 11), 0, 1, 32).unwrap().remove(0)
    }

    #[test]
    fn crop_resize_identity() {
        let s = sample();
        assert_eq!(crop_resize(&s, 32, 32).unwrap(), s);
    }

    #[test]
    fn crop_resize_rejects_bad_sizes() {
        let s = sample();
        assert!(crop_resize(&s, 32, 0).is_err());
        assert!(crop_resize(&s, 33, 16).is_err());
    }

    #[test]
    fn empty_disc_uses_centre_crop() {
        let mut s = sample();
        s.od = BinaryMask::empty(32, 32);
        s.oc = BinaryMask::from_fn(32, 32, |r, c| r == 8 && c == 8);
        let out = crop_resize(&s, 16, 16).unwrap();
        // centre window starts at (8, 8)
        assert!(out.oc.get(0, 0));
        assert_eq!(out.image.data()[0], s.image.data()[8 * 32 + 8]);
    }

    #[test]
    fn nearest_downsize_matches_index_subsampling() {
        let mut s = generate_domain(&DomainSpec::neutral(1), 0, 1, 32).unwrap().remove(0);
        let checker = BinaryMask::from_fn(32, 32, |r, c| (r + c) % 2 == 0);
        s.od = BinaryMask::empty(32, 32);
        s.oc = checker.clone();
        let out = crop_resize(&s, 8, 4).unwrap();
        // centre crop of 8 starts at 12
        let expect = BinaryMask::from_fn(4, 4, |i, j| checker.get(12 + 2 * i, 12 + 2 * j));
        assert_eq!(out.oc, expect);
    }

    #[test]
    fn nothing_fires_when_disabled() {
        let s = sample();
        let aug = Augmenter::new(AugmentConfig::none(), [0.5; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(aug.apply(&s, &mut rng), s);
    }

    #[test]
    fn forced_flip_is_an_involution() {
        let s = sample();
        let cfg = AugmentConfig {
            p_flip: 1.0,
            ..AugmentConfig::none()
        };
        let aug = Augmenter::new(cfg, [0.5; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let once = aug.apply(&s, &mut rng);
        assert_ne!(once, s);
        assert!(once.oc.is_subset_of(&once.od));
        assert_eq!(aug.apply(&once, &mut rng), s);
    }

    #[test]
    fn forced_erase_leaves_masks_alone() {
        let s = sample();
        let cfg = AugmentConfig {
            p_erase: 1.0,
            p_noise: 1.0,
            p_lightness: 1.0,
            ..AugmentConfig::none()
        };
        let aug = Augmenter::new(cfg, [0.25, 0.5, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = aug.apply(&s, &mut rng);
        assert_eq!(out.od, s.od);
        assert_eq!(out.oc, s.oc);
        assert_ne!(out.image, s.image);
        assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
