//! Dense inner loops shared by conv2d and linear.
//!
//! `matmul_acc` accumulates every output element in strictly increasing `k`
//! order starting from the existing output value, so a convolution computed
//! through it is bit-identical to a naive nested loop that starts from the
//! bias and sums over (channel, kernel row, kernel column).

const MR: usize = 4;
const NR: usize = 16;
const KC: usize = 256;
const JC: usize = 64;

/// `out[m×n] += a[m×k] · b[k×n]`, row-major.
///
/// Blocked over `k` in panels of `KC` and over columns in panels of `JC`,
/// so the active block of `b` stays cache-resident across row blocks. Panels are visited
/// in increasing `k`, which keeps the per-element summation order intact.
pub(crate) fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let n_wide = n - n % NR;
    let n_main = n - n % 8;
    let mut k0 = 0;
    while k0 < k {
        let k1 = (k0 + KC).min(k);
        let mut j0 = 0;
        while j0 < n_wide {
            let j1 = (j0 + JC).min(n_wide);
            let mut i = 0;
            while i + MR <= m {
                for j in (j0..j1).step_by(NR) {
                    micro::<MR, NR>(out, a, b, i, j, k0..k1, k, n);
                }
                i += MR;
            }
            for r in i..m {
                for j in (j0..j1).step_by(NR) {
                    micro::<1, NR>(out, a, b, r, j, k0..k1, k, n);
                }
            }
            j0 = j1;
        }
        if n_wide < n_main {
            let mut i = 0;
            while i + MR <= m {
                micro::<MR, 8>(out, a, b, i, n_wide, k0..k1, k, n);
                i += MR;
            }
            for r in i..m {
                micro::<1, 8>(out, a, b, r, n_wide, k0..k1, k, n);
            }
        }
        if n_main < n {
            for r in 0..m {
                tail_row(out, a, b, r, n_main, k0..k1, k, n);
            }
        }
        k0 = k1;
    }
}

/// `R`×`C` register block of the output, accumulated over `ks`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn micro<const R: usize, const C: usize>(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    i: usize,
    j: usize,
    ks: std::ops::Range<usize>,
    k: usize,
    n: usize,
) {
    let mut acc = [[0.0f64; C]; R];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&out[(i + r) * n + j..(i + r) * n + j + C]);
    }
    let rows: [&[f64]; R] = std::array::from_fn(|r| &a[(i + r) * k..(i + r + 1) * k]);
    for p in ks {
        let bv: &[f64; C] = b[p * n + j..p * n + j + C].try_into().unwrap();
        for r in 0..R {
            let x = rows[r][p];
            for t in 0..C {
                acc[r][t] += x * bv[t];
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        out[(i + r) * n + j..(i + r) * n + j + C].copy_from_slice(row);
    }
}

#[allow(clippy::too_many_arguments)]
fn tail_row(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    r: usize,
    j0: usize,
    ks: std::ops::Range<usize>,
    k: usize,
    n: usize,
) {
    for j in j0..n {
        let mut acc = out[r * n + j];
        for p in ks.clone() {
            acc += a[r * k + p] * b[p * n + j];
        }
        out[r * n + j] = acc;
    }
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ` (row-wise dot products).
pub(crate) fn matmul_abt_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, n: usize, k: usize) {
    debug_assert_eq!(out.len(), m * k);
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    let mut i = 0;
    while i + 2 <= m {
        let ra = &a[i * n..(i + 1) * n];
        let rb = &a[(i + 1) * n..(i + 2) * n];
        let mut j = 0;
        while j + 2 <= k {
            let c0 = &b[j * n..(j + 1) * n];
            let c1 = &b[(j + 1) * n..(j + 2) * n];
            let [s00, s01, s10, s11] = dot_2x2(ra, rb, c0, c1);
            out[i * k + j] += s00;
            out[i * k + j + 1] += s01;
            out[(i + 1) * k + j] += s10;
            out[(i + 1) * k + j + 1] += s11;
            j += 2;
        }
        if j < k {
            let c0 = &b[j * n..(j + 1) * n];
            out[i * k + j] += dot(ra, c0);
            out[(i + 1) * k + j] += dot(rb, c0);
        }
        i += 2;
    }
    if i < m {
        let ra = &a[i * n..(i + 1) * n];
        for j in 0..k {
            out[i * k + j] += dot(ra, &b[j * n..(j + 1) * n]);
        }
    }
}

#[inline(always)]
fn dot_2x2(ra: &[f64], rb: &[f64], c0: &[f64], c1: &[f64]) -> [f64; 4] {
    const L: usize = 4;
    let n = ra.len();
    let mut acc = [[0.0f64; L]; 4];
    let main = n - n % L;
    let mut t = 0;
    while t < main {
        for l in 0..L {
            let (x, y) = (ra[t + l], rb[t + l]);
            let (u, v) = (c0[t + l], c1[t + l]);
            acc[0][l] += x * u;
            acc[1][l] += x * v;
            acc[2][l] += y * u;
            acc[3][l] += y * v;
        }
        t += L;
    }
    let mut sums = [0.0; 4];
    for (s, lanes) in sums.iter_mut().zip(&acc) {
        *s = lanes.iter().sum();
    }
    for t in main..n {
        sums[0] += ra[t] * c0[t];
        sums[1] += ra[t] * c1[t];
        sums[2] += rb[t] * c0[t];
        sums[3] += rb[t] * c1[t];
    }
    sums
}

#[inline(always)]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    const L: usize = 4;
    let n = x.len();
    let main = n - n % L;
    let mut acc = [0.0f64; L];
    let mut t = 0;
    while t < main {
        for l in 0..L {
            acc[l] += x[t + l] * y[t + l];
        }
        t += L;
    }
    let mut s: f64 = acc.iter().sum();
    for t in main..n {
        s += x[t] * y[t];
    }
    s
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    fn seq(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 7919) % 97) as f64 * scale - 1.0).collect()
    }

    #[test]
    fn matmul_is_bit_identical_to_ordered_sum() {
        for &(m, k, n) in &[(1, 1, 1), (5, 3, 17), (4, 9, 8), (9, 27, 33), (3, 2, 7)] {
            let a = seq(m * k, 0.013);
            let b = seq(k * n, 0.021);
            let mut out = vec![0.0; m * n];
            matmul_acc(&mut out, &a, &b, m, k, n);
            assert_eq!(out, naive(&a, &b, m, k, n), "{m}x{k}x{n}");
        }
    }

    #[test]
    fn abt_matches_naive_within_rounding() {
        for &(m, n, k) in &[(1, 5, 1), (3, 9, 5), (4, 16, 4), (5, 13, 3)] {
            let a = seq(m * n, 0.011);
            let b = seq(k * n, 0.017);
            let mut out = vec![0.0; m * k];
            matmul_abt_acc(&mut out, &a, &b, m, n, k);
            let bt = transpose(&b, k, n);
            let expect = naive(&a, &bt, m, n, k);
            for (x, y) in out.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
