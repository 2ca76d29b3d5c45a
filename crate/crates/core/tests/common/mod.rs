//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use afnn::metrics::BinaryMask;
use rand::Rng;

/// A random mask pair of equal size, at most `max`×`max`. Densities vary per
/// mask so sparse, dense and empty masks all show up.
pub fn random_mask_pair<R: Rng>(rng: &mut R, max: usize) -> (BinaryMask, BinaryMask) {
    let h = rng.random_range(1..=max);
    let w = rng.random_range(1..=max);
    let one = |rng: &mut R| {
        let p: f64 = [0.0, 0.05, 0.3, 0.6, 0.95][rng.random_range(0..5)];
        let bits = (0..h * w).map(|_| rng.random_bool(p)).collect();
        BinaryMask::new(h, w, bits).unwrap()
    };
    let a = one(rng);
    let b = one(rng);
    (a, b)
}

fn packed(m: &BinaryMask) -> Vec<u64> {
    let mut words = vec![0u64; m.bits().len().div_ceil(64)];
    for (i, &b) in m.bits().iter().enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// Dice by popcount over packed 64-bit words.
pub fn dsc_popcount(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (pa, pb) = (packed(a), packed(b));
    let count = |w: &[u64]| w.iter().map(|x| x.count_ones()).sum::<u32>();
    let inter: u32 = pa.iter().zip(&pb).map(|(x, y)| (x & y).count_ones()).sum();
    let total = count(&pa) + count(&pb);
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// Foreground pixels with a 4-neighbour that is background or off-image.
pub fn surface_oracle(m: &BinaryMask) -> Vec<(f64, f64)> {
    let (h, w) = (m.height() as i64, m.width() as i64);
    let fg = |r: i64, c: i64| r >= 0 && c >= 0 && r < h && c < w && m.get(r as usize, c as usize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if fg(r, c) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| !fg(r + dr, c + dc)) {
                out.push((r as f64, c as f64));
            }
        }
    }
    out
}

fn nearest(p: (f64, f64), set: &[(f64, f64)]) -> f64 {
    set.iter()
        .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance over every surface pair; `None` when
/// exactly one surface is empty.
pub fn hausdorff_all_pairs(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
    let (sa, sb) = (surface_oracle(a), surface_oracle(b));
    match (sa.is_empty(), sb.is_empty()) {
        (true, true) => Some(0.0),
        (true, false) | (false, true) => None,
        _ => {
            let ab = sa.iter().map(|&p| nearest(p, &sb)).fold(0.0, f64::max);
            let ba = sb.iter().map(|&p| nearest(p, &sa)).fold(0.0, f64::max);
            Some(ab.max(ba))
        }
    }
}

/// Summed nearest-surface distances in both directions over the total
/// surface size.
pub fn asd_all_pairs(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
    let (sa, sb) = (surface_oracle(a), surface_oracle(b));
    match (sa.is_empty(), sb.is_empty()) {
        (true, true) => Some(0.0),
        (true, false) | (false, true) => None,
        _ => {
            let ab: f64 = sa.iter().map(|&p| nearest(p, &sb)).sum();
            let ba: f64 = sb.iter().map(|&p| nearest(p, &sa)).sum();
            Some((ab + ba) / (sa.len() + sb.len()) as f64)
        }
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}
