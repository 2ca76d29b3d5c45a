//! Procedural fundus-like images with exact disc and cup masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::tensor::Tensor;

const BASE_COLOR: [f64; 3] = [0.62, 0.32, 0.18];
const DISC_GAIN: [f64; 3] = [0.25, 0.28, 0.22];
const CUP_GAIN: [f64; 3] = [0.12, 0.18, 0.20];
const MAX_RETRIES: usize = 100;

/// Photometric signature and geometry ranges of one synthetic domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub brightness_shift: f64,
    pub contrast_gain: f64,
    pub noise_sigma: f64,
    pub tint: [f64; 3],
    pub vignette_strength: f64,
    /// Disc radius as a fraction of the image size.
    pub disc_radius_range: (f64, f64),
    /// Cup radius as a fraction of the disc radius.
    pub cup_ratio_range: (f64, f64),
    pub seed: u64,
}

impl DomainSpec {
    /// No photometric change at all; only geometry and texture vary.
    pub fn neutral(seed: u64) -> Self {
        DomainSpec {
            brightness_shift: 0.0,
            contrast_gain: 1.0,
            noise_sigma: 0.0,
            tint: [1.0; 3],
            vignette_strength: 0.0,
            disc_radius_range: (0.2, 0.35),
            cup_ratio_range: (0.4, 0.7),
            seed,
        }
    }

    /// Four fixed scanner-like looks: bright and flat, dark and contrasty,
    /// green-tinted and noisy, and strongly vignetted. Indices wrap mod 4.
    pub fn preset(domain: usize, seed: u64) -> Self {
        let base = Self::neutral(seed ^ ((domain as u64 + 1) << 40));
        match domain % 4 {
            0 => DomainSpec {
                brightness_shift: 0.2,
                contrast_gain: 0.6,
                noise_sigma: 0.01,
                ..base
            },
            1 => DomainSpec {
                brightness_shift: -0.15,
                contrast_gain: 1.35,
                noise_sigma: 0.01,
                vignette_strength: 0.1,
                ..base
            },
            2 => DomainSpec {
                noise_sigma: 0.05,
                tint: [0.8, 1.3, 0.9],
                ..base
            },
            _ => DomainSpec {
                contrast_gain: 1.1,
                noise_sigma: 0.015,
                vignette_strength: 0.6,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(-0.4..=0.4).contains(&self.brightness_shift) {
            return bad(format!("brightness_shift {} outside [-0.4, 0.4]", self.brightness_shift));
        }
        if !(0.5..=1.8).contains(&self.contrast_gain) {
            return bad(format!("contrast_gain {} outside [0.5, 1.8]", self.contrast_gain));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} is negative", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.vignette_strength) {
            return bad(format!("vignette_strength {} outside [0, 1]", self.vignette_strength));
        }
        if self.tint.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad(format!("tint {:?} must be finite and non-negative", self.tint));
        }
        for (name, (lo, hi)) in [("disc_radius_range", self.disc_radius_range), ("cup_ratio_range", self.cup_ratio_range)] {
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return bad(format!("{name} ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"));
            }
        }
        Ok(())
    }
}

struct Geometry {
    disc: (f64, f64),
    disc_r: f64,
    cup: (f64, f64),
    cup_r: f64,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn draw_geometry(spec: &DomainSpec, size: f64, rng: &mut ChaCha8Rng) -> Result<Geometry> {
    let jitter = 0.08 * size;
    let disc = (
        size / 2.0 + rng.random_range(-jitter..jitter),
        size / 2.0 + rng.random_range(-jitter..jitter),
    );
    let disc_r = draw(rng, spec.disc_radius_range) * size;
    for _ in 0..MAX_RETRIES {
        let cup_r = draw(rng, spec.cup_ratio_range) * disc_r;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let offset = rng.random_range(0.0..0.15) * disc_r;
        if offset + cup_r < disc_r - 1.0 {
            return Ok(Geometry {
                disc,
                disc_r,
                cup: (disc.0 + offset * angle.sin(), disc.1 + offset * angle.cos()),
                cup_r,
            });
        }
    }
    Err(Error::invalid(format!(
        "could not place a cup inside a disc of radius {disc_r:.2} px after {MAX_RETRIES} tries"
    )))
}

fn smoothstep(x: f64, width: f64) -> f64 {
    1.0 / (1.0 + (-x / width).exp())
}

/// Renders `count` samples of `size`×`size` labelled with `domain`.
/// Sample `i` depends only on (`spec`, `i`), so equal specs yield equal data.
pub fn generate_domain(spec: &DomainSpec, domain: usize, count: usize, size: usize) -> Result<Vec<Sample>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if size < 32 {
        return Err(Error::invalid(format!("image size must be at least 32, got {size}")));
    }
    (0..count).map(|i| render(spec, domain, i, size)).collect()
}

fn render(spec: &DomainSpec, domain: usize, index: usize, size: usize) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let s = size as f64;
    let g = draw_geometry(spec, s, &mut rng)?;

    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = std::f64::consts::TAU / s;
            (
                f * rng.random_range(1.0..4.0),
                f * rng.random_range(1.0..4.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    // vessels: bent lines through a point near the disc centre
    let vessels: Vec<[f64; 6]> = (0..rng.random_range(3..5))
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            [
                g.disc.0 + rng.random_range(-0.3..0.3) * g.disc_r,
                g.disc.1 + rng.random_range(-0.3..0.3) * g.disc_r,
                theta,
                rng.random_range(1.0..3.0),
                std::f64::consts::TAU / s * rng.random_range(1.0..2.5),
                rng.random_range(0.5..1.1),
            ]
        })
        .collect();

    let center = s / 2.0;
    let corner = center * std::f64::consts::SQRT_2;
    let mut od = BinaryMask::empty(size, size);
    let mut oc = BinaryMask::empty(size, size);
    let mut data = vec![0.0; 3 * size * size];
    let plane = size * size;
    for r in 0..size {
        for c in 0..size {
            let (y, x) = (r as f64, c as f64);
            let rho2 = ((y - center).powi(2) + (x - center).powi(2)) / (corner * corner);
            let dd = ((y - g.disc.0).powi(2) + (x - g.disc.1).powi(2)).sqrt();
            let dc = ((y - g.cup.0).powi(2) + (x - g.cup.1).powi(2)).sqrt();
            od.set(r, c, dd <= g.disc_r);
            oc.set(r, c, dc <= g.cup_r);
            let texture: f64 = waves.iter().map(|(fy, fx, ph)| (fy * y + fx * x + ph).sin()).sum::<f64>() * 0.04 / 3.0;
            let disc_w = smoothstep(g.disc_r - dd, 0.8);
            let cup_w = smoothstep(g.cup_r - dc, 1.5);
            let mut shade = 1.0;
            for v in &vessels {
                let (dy, dx) = (y - v[0], x - v[1]);
                let along = dx * v[2].cos() + dy * v[2].sin();
                let across = -dx * v[2].sin() + dy * v[2].cos();
                let e = across - v[3] * (v[4] * along).sin();
                shade *= 1.0 - 0.35 * (-e * e / (2.0 * v[5] * v[5])).exp();
            }
            for ch in 0..3 {
                let base = BASE_COLOR[ch] * (1.0 - 0.35 * rho2) + texture;
                let v = (base + DISC_GAIN[ch] * disc_w + CUP_GAIN[ch] * cup_w) * shade;
                data[ch * plane + r * size + c] = v.clamp(0.0, 1.0);
            }
        }
    }

    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());
    for ch in 0..3 {
        for r in 0..size {
            for c in 0..size {
                let (y, x) = (r as f64, c as f64);
                let rho2 = ((y - center).powi(2) + (x - center).powi(2)) / (corner * corner);
                let v = &mut data[ch * plane + r * size + c];
                let mut t = ((*v - 0.5) * spec.contrast_gain + 0.5 + spec.brightness_shift)
                    * spec.tint[ch]
                    * (1.0 - spec.vignette_strength * rho2);
                if let Some(n) = &noise {
                    t += n.sample(&mut rng);
                }
                *v = t.clamp(0.0, 1.0);
            }
        }
    }
    let image = Tensor::new(&[3, size, size], data)?;
    Sample::new(format!("d{domain}_{index:04}"), image, od, oc, domain)
}
