//! Overlap and surface-distance metrics between binary masks.

use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use crate::error::Result;

/// Neighbourhood used to decide whether a foreground pixel touches background.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

/// Dice similarity `2|d∩y| / (|d|+|y|)`; two empty masks score 1.
pub fn dsc(d: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    d.check_same_dims(y, "dsc")?;
    let total = d.count() + y.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * d.intersection(y) as f64 / total as f64)
}

/// Foreground pixels with at least one background neighbour, treating
/// everything outside the image as background. Row-major order.
pub fn surface(m: &BinaryMask, conn: Connectivity) -> Vec<(usize, usize)> {
    let (h, w) = (m.height() as isize, m.width() as isize);
    let four: &[(isize, isize)] = &[(-1, 0), (1, 0), (0, -1), (0, 1)];
    let eight: &[(isize, isize)] = &[
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -1),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];
    let offsets = match conn {
        Connectivity::Four => four,
        Connectivity::Eight => eight,
    };
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !m.get(r as usize, c as usize) {
                continue;
            }
            let touches = offsets.iter().any(|&(dr, dc)| {
                let (nr, nc) = (r + dr, c + dc);
                nr < 0 || nc < 0 || nr >= h || nc >= w || !m.get(nr as usize, nc as usize)
            });
            if touches {
                out.push((r as usize, c as usize));
            }
        }
    }
    out
}

/// Exact squared Euclidean distance from every pixel to the nearest pixel
/// in `sites`, by two passes of the lower-envelope-of-parabolas transform.
pub(crate) fn squared_distance_transform(h: usize, w: usize, sites: &[(usize, usize)]) -> Vec<f64> {
    let inf = f64::INFINITY;
    let mut grid = vec![inf; h * w];
    for &(r, c) in sites {
        grid[r * w + c] = 0.0;
    }
    let mut buf = vec![0.0; h.max(w)];
    let mut out = vec![0.0; h.max(w)];
    let mut scratch = Envelope::with_capacity(h.max(w));
    for r in 0..h {
        buf[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        scratch.transform(&buf[..w], &mut out[..w]);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    for c in 0..w {
        for r in 0..h {
            buf[r] = grid[r * w + c];
        }
        scratch.transform(&buf[..h], &mut out[..h]);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    grid
}

struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// `out[q] = min_p (q − p)² + f[p]`, with infinite `f` meaning "no site".
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let finite: Vec<usize> = (0..n).filter(|&p| f[p].is_finite()).collect();
        if finite.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        self.v[0] = finite[0];
        self.z[0] = f64::NEG_INFINITY;
        self.z[1] = f64::INFINITY;
        let meet = |f: &[f64], p: usize, q: usize| {
            let (pf, qf) = (p as f64, q as f64);
            ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
        };
        for &q in &finite[1..] {
            let mut s = meet(f, self.v[k], q);
            while s <= self.z[k] {
                k -= 1;
                s = meet(f, self.v[k], q);
            }
            k += 1;
            self.v[k] = q;
            self.z[k] = s;
            self.z[k + 1] = f64::INFINITY;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            while self.z[k + 1] < q as f64 {
                k += 1;
            }
            let d = q as f64 - self.v[k] as f64;
            *o = d * d + f[self.v[k]];
        }
    }
}

/// Directed distances from every pixel of `from` to its nearest pixel of `to`.
fn directed(h: usize, w: usize, from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    let dt = squared_distance_transform(h, w, to);
    from.iter().map(|&(r, c)| dt[r * w + c].sqrt()).collect()
}

/// Surface pairs, or the empty-surface outcome: `Some(0.0)` when both are
/// empty, `None` ("undefined-empty") when exactly one is.
fn surfaces(
    d: &BinaryMask,
    y: &BinaryMask,
    conn: Connectivity,
    op: &'static str,
) -> Result<Result<(Vec<(usize, usize)>, Vec<(usize, usize)>), Option<f64>>> {
    d.check_same_dims(y, op)?;
    let (sd, sy) = (surface(d, conn), surface(y, conn));
    Ok(match (sd.is_empty(), sy.is_empty()) {
        (true, true) => Err(Some(0.0)),
        (true, false) | (false, true) => Err(None),
        _ => Ok((sd, sy)),
    })
}

/// Symmetric Hausdorff distance between the two surfaces, in pixels.
/// `None` when exactly one surface is empty.
pub fn hausdorff(d: &BinaryMask, y: &BinaryMask, conn: Connectivity) -> Result<Option<f64>> {
    let (sd, sy) = match surfaces(d, y, conn, "hausdorff")? {
        Ok(s) => s,
        Err(outcome) => return Ok(outcome),
    };
    let (h, w) = (d.height(), d.width());
    let max = |v: Vec<f64>| v.into_iter().fold(0.0f64, f64::max);
    Ok(Some(max(directed(h, w, &sd, &sy)).max(max(directed(h, w, &sy, &sd)))))
}

/// Average symmetric surface distance: both directed distance sums divided
/// by the total surface pixel count. `None` when exactly one surface is empty.
pub fn asd(d: &BinaryMask, y: &BinaryMask, conn: Connectivity) -> Result<Option<f64>> {
    let (sd, sy) = match surfaces(d, y, conn, "asd")? {
        Ok(s) => s,
        Err(outcome) => return Ok(outcome),
    };
    let (h, w) = (d.height(), d.width());
    let total: f64 = directed(h, w, &sd, &sy).iter().sum::<f64>() + directed(h, w, &sy, &sd).iter().sum::<f64>();
    Ok(Some(total / (sd.len() + sy.len()) as f64))
}
