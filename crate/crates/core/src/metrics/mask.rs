use crate::error::{Error, Result};

/// A binary image of `h`×`w` pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!("mask dims must be positive, got {h}x{w}")));
        }
        if bits.len() != h * w {
            return Err(Error::shape(
                "mask",
                format!("{h}x{w} mask needs {} pixels, got {}", h * w, bits.len()),
            ));
        }
        Ok(BinaryMask { h, w, bits })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        BinaryMask {
            h,
            w,
            bits: vec![false; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..h * w).map(|i| f(i / w, i % w)).collect();
        BinaryMask { h, w, bits }
    }

    /// Foreground where `values > threshold`.
    pub fn threshold(h: usize, w: usize, values: &[f64], threshold: f64) -> Result<Self> {
        Self::new(h, w, values.iter().map(|&v| v > threshold).collect())
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.w + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.w + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixel-wise AND count.
    pub fn intersection(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    /// Whether every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    /// 0.0/1.0 values in row-major order.
    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as u8 as f64).collect()
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.h, self.w, |r, c| self.get(r, self.w - 1 - c))
    }

    pub(crate) fn check_same_dims(&self, other: &BinaryMask, op: &'static str) -> Result<()> {
        if (self.h, self.w) != (other.h, other.w) {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", self.h, self.w, other.h, other.w),
            ));
        }
        Ok(())
    }
}
