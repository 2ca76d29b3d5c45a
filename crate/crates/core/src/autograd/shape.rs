use super::tape::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Nearest-neighbour upsampling of the spatial dims by an integer factor.
pub fn upsample_nearest(input: Var<'_>, factor: usize) -> Result<Var<'_>> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be at least 1"));
    }
    let x = input.value();
    let (n, c, h, w) = x.dims4("upsample_nearest")?;
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![0.0; n * c * oh * ow];
    for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
        for i in 0..oh {
            let row = &src[(i / factor) * w..(i / factor + 1) * w];
            for (j, d) in dst[i * ow..(i + 1) * ow].iter_mut().enumerate() {
                *d = row[j / factor];
            }
        }
    }
    let value = Tensor::from_parts(vec![n, c, oh, ow], out);
    Ok(input.tape().record(
        "upsample_nearest",
        &[input],
        value,
        Box::new(move |_, g| {
            let mut dx = vec![0.0; n * c * h * w];
            for (gs, ds) in g.data().chunks_exact(oh * ow).zip(dx.chunks_exact_mut(h * w)) {
                for i in 0..oh {
                    for j in 0..ow {
                        ds[(i / factor) * w + j / factor] += gs[i * ow + j];
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![n, c, h, w], dx))]
        }),
    ))
}

/// Mean over non-overlapping `factor`×`factor` windows.
pub fn avgpool2d(input: Var<'_>, factor: usize) -> Result<Var<'_>> {
    if factor == 0 {
        return Err(Error::invalid("pooling factor must be at least 1"));
    }
    let x = input.value();
    let (n, c, h, w) = x.dims4("avgpool2d")?;
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(
            "avgpool2d",
            format!("spatial dims {h}x{w} not divisible by factor {factor}"),
        ));
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; n * c * oh * ow];
    for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for di in 0..factor {
                    let row = (i * factor + di) * w + j * factor;
                    acc += src[row..row + factor].iter().sum::<f64>();
                }
                dst[i * ow + j] = acc * norm;
            }
        }
    }
    let value = Tensor::from_parts(vec![n, c, oh, ow], out);
    Ok(input.tape().record(
        "avgpool2d",
        &[input],
        value,
        Box::new(move |_, g| {
            let mut dx = vec![0.0; n * c * h * w];
            for (gs, ds) in g.data().chunks_exact(oh * ow).zip(dx.chunks_exact_mut(h * w)) {
                for i in 0..h {
                    for j in 0..w {
                        ds[i * w + j] = gs[(i / factor) * ow + j / factor] * norm;
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![n, c, h, w], dx))]
        }),
    ))
}

/// Mean over the spatial dims: N×C×H×W → N×C.
pub fn global_avg_pool(input: Var<'_>) -> Result<Var<'_>> {
    let x = input.value();
    let (n, c, h, w) = x.dims4("global_avg_pool")?;
    let hw = h * w;
    let data = x
        .data()
        .chunks_exact(hw)
        .map(|p| p.iter().sum::<f64>() / hw as f64)
        .collect();
    let value = Tensor::from_parts(vec![n, c], data);
    Ok(input.tape().record(
        "global_avg_pool",
        &[input],
        value,
        Box::new(move |_, g| {
            let mut dx = Vec::with_capacity(n * c * hw);
            for &v in g.data() {
                dx.extend(std::iter::repeat_n(v / hw as f64, hw));
            }
            vec![Some(Tensor::from_parts(vec![n, c, h, w], dx))]
        }),
    ))
}

/// Concatenates tensors that agree on every dimension except `axis`.
pub fn concat<'t>(inputs: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("concat needs at least one input"))?;
    let values: Vec<_> = inputs.iter().map(|v| v.value()).collect();
    let base = values[0].shape().to_vec();
    if axis >= base.len() {
        return Err(Error::shape(
            "concat",
            format!("axis {axis} out of range for rank {}", base.len()),
        ));
    }
    for v in &values[1..] {
        let s = v.shape();
        let agrees = s.len() == base.len()
            && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
        if !agrees {
            return Err(Error::shape(
                "concat",
                format!("{s:?} incompatible with {base:?} along axis {axis}"),
            ));
        }
    }
    let lens: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
    let total: usize = lens.iter().sum();
    let (outer, _, inner) = split_at_axis(&base, axis);
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &len) in values.iter().zip(&lens) {
            out.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
        }
    }
    let mut shape = base;
    shape[axis] = total;
    let value = Tensor::from_parts(shape, out);
    Ok(first.tape().record(
        "concat",
        inputs,
        value,
        Box::new(move |ctx, g| {
            let mut grads: Vec<Option<Vec<f64>>> = ctx
                .needs
                .iter()
                .zip(&lens)
                .map(|(&need, &len)| need.then(|| Vec::with_capacity(outer * len * inner)))
                .collect();
            let gd = g.data();
            let mut offset = 0;
            for _ in 0..outer {
                for (slot, &len) in grads.iter_mut().zip(&lens) {
                    if let Some(buf) = slot {
                        buf.extend_from_slice(&gd[offset..offset + len * inner]);
                    }
                    offset += len * inner;
                }
            }
            grads
                .into_iter()
                .zip(&ctx.inputs)
                .map(|(d, x)| d.map(|d| Tensor::from_parts(x.shape().to_vec(), d)))
                .collect()
        }),
    ))
}

/// The sub-range `start..start + len` along `axis`.
pub fn narrow(input: Var<'_>, axis: usize, start: usize, len: usize) -> Result<Var<'_>> {
    let x = input.value();
    let shape = x.shape().to_vec();
    if axis >= shape.len() || len == 0 || start + len > shape[axis] {
        return Err(Error::shape(
            "narrow",
            format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
        ));
    }
    let (outer, dim, inner) = split_at_axis(&shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * dim + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut out_shape = shape.clone();
    out_shape[axis] = len;
    let value = Tensor::from_parts(out_shape, out);
    Ok(input.tape().record(
        "narrow",
        &[input],
        value,
        Box::new(move |_, g| {
            let mut dx = vec![0.0; outer * dim * inner];
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                dx[base..base + len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::from_parts(shape.clone(), dx))]
        }),
    ))
}

/// Pads the spatial dims by `pad` on every side, repeating the edge pixels.
pub fn pad_edge(input: Var<'_>, pad: usize) -> Result<Var<'_>> {
    let x = input.value();
    let (n, c, h, w) = x.dims4("pad_edge")?;
    let (oh, ow) = (h + 2 * pad, w + 2 * pad);
    let src_of = move |i: usize, j: usize| i.saturating_sub(pad).min(h - 1) * w + j.saturating_sub(pad).min(w - 1);
    let mut out = vec![0.0; n * c * oh * ow];
    for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
        for i in 0..oh {
            for j in 0..ow {
                dst[i * ow + j] = src[src_of(i, j)];
            }
        }
    }
    let value = Tensor::from_parts(vec![n, c, oh, ow], out);
    Ok(input.tape().record(
        "pad_edge",
        &[input],
        value,
        Box::new(move |_, g| {
            let mut dx = vec![0.0; n * c * h * w];
            for (gs, ds) in g.data().chunks_exact(oh * ow).zip(dx.chunks_exact_mut(h * w)) {
                for i in 0..oh {
                    for j in 0..ow {
                        ds[src_of(i, j)] += gs[i * ow + j];
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![n, c, h, w], dx))]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn upsample_by_one_is_identity() {
        let tape = Tape::new();
        let x = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f64);
        let y = upsample_nearest(tape.constant(x.clone()), 1).unwrap();
        assert_eq!(*y.value(), x);
    }

    #[test]
    fn upsample_replicates_blocks() {
        let tape = Tape::new();
        let x = Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let y = upsample_nearest(tape.constant(x), 2).unwrap();
        assert_eq!(y.value().data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn avgpool_means_by_hand() {
        let tape = Tape::new();
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let y = avgpool2d(tape.constant(x), 2).unwrap();
        assert_eq!(y.value().data(), &[4.0]);
    }

    #[test]
    fn avgpool_rejects_indivisible_dims() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 1, 3, 4]));
        assert!(avgpool2d(x, 2).is_err());
    }

    #[test]
    fn concat_then_narrow_round_trips() {
        let tape = Tape::new();
        let a = Tensor::from_fn(&[2, 3, 2, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 1, 2, 2], |i| -(i as f64));
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let cat = concat(&[va, vb], 1).unwrap();
        assert_eq!(cat.shape(), vec![2, 4, 2, 2]);
        assert_eq!(*narrow(cat, 1, 0, 3).unwrap().value(), a);
        assert_eq!(*narrow(cat, 1, 3, 1).unwrap().value(), b);
    }

    #[test]
    fn concat_rejects_disagreeing_dims() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[1, 2, 4, 4]));
        let b = tape.constant(Tensor::zeros(&[1, 2, 2, 2]));
        assert!(concat(&[a, b], 1).is_err());
        assert!(concat(&[a, a], 4).is_err());
    }

    #[test]
    fn global_avg_pool_means_planes() {
        let tape = Tape::new();
        let x = Tensor::new(&[1, 2, 1, 2], vec![1.0, 3.0, -2.0, 6.0]).unwrap();
        let y = global_avg_pool(tape.constant(x)).unwrap();
        assert_eq!(y.shape(), vec![1, 2]);
        assert_eq!(y.value().data(), &[2.0, 2.0]);
    }

    #[test]
    fn pad_edge_repeats_borders() {
        let tape = Tape::new();
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pad_edge(tape.constant(x.clone()), 1).unwrap();
        assert_eq!(
            y.value().data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        assert_eq!(*pad_edge(tape.constant(x.clone()), 0).unwrap().value(), x);
    }
}
