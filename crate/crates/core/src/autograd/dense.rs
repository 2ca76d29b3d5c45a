use super::kernels::{matmul_abt_acc, matmul_acc, transpose};
use super::tape::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine map `x · weight + bias` for `x`: N×F, `weight`: F×G, `bias`: G.
pub fn linear<'t>(input: Var<'t>, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let (x, w, b) = (input.value(), weight.value(), bias.value());
    let (n, f) = x.dims2("linear")?;
    let (wf, g) = w.dims2("linear")?;
    if wf != f {
        return Err(Error::shape(
            "linear",
            format!("input has {f} features but weight expects {wf}"),
        ));
    }
    if b.shape() != [g] {
        return Err(Error::shape(
            "linear",
            format!("bias shape {:?} does not match {g} outputs", b.shape()),
        ));
    }
    let mut out = Vec::with_capacity(n * g);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    matmul_acc(&mut out, x.data(), w.data(), n, f, g);
    let value = Tensor::from_parts(vec![n, g], out);
    Ok(input.tape().record(
        "linear",
        &[input, weight, bias],
        value,
        Box::new(move |ctx, gy| {
            let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![0.0; n * f];
                matmul_abt_acc(&mut dx, gy.data(), w.data(), n, g, f);
                Tensor::from_parts(vec![n, f], dx)
            });
            let dw = ctx.needs[1].then(|| {
                let mut dw = vec![0.0; f * g];
                matmul_acc(&mut dw, &transpose(x.data(), n, f), gy.data(), f, n, g);
                Tensor::from_parts(vec![f, g], dw)
            });
            let db = ctx.needs[2].then(|| {
                let mut db = vec![0.0; g];
                for row in gy.data().chunks_exact(g) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                Tensor::from_parts(vec![g], db)
            });
            vec![dx, dw, db]
        }),
    ))
}

fn axis_extents(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(
            op,
            format!("axis {axis} out of range for shape {shape:?}"),
        ));
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

/// Softmax along `axis`, stabilized by subtracting the running maximum.
pub fn softmax(input: Var<'_>, axis: usize) -> Result<Var<'_>> {
    let x = input.value();
    let (outer, dim, inner) = axis_extents(x.shape(), axis, "softmax")?;
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * dim + k) * inner + i;
            let max = (0..dim).map(|k| xd[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..dim {
                let e = (xd[idx(k)] - max).exp();
                out[idx(k)] = e;
                z += e;
            }
            for k in 0..dim {
                out[idx(k)] /= z;
            }
        }
    }
    let value = Tensor::from_parts(x.shape().to_vec(), out);
    Ok(input.tape().record(
        "softmax",
        &[input],
        value,
        Box::new(move |ctx, g| {
            let (y, gd) = (ctx.output.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * dim + k) * inner + i;
                    let dot: f64 = (0..dim).map(|k| gd[idx(k)] * y[idx(k)]).sum();
                    for k in 0..dim {
                        dx[idx(k)] = y[idx(k)] * (gd[idx(k)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts(g.shape().to_vec(), dx))]
        }),
    ))
}

/// Mean over rows of `-log softmax(logits)[label]`, computed via log-sum-exp.
pub fn cross_entropy_with_logits<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let z = logits.value();
    let (n, k) = z.dims2("cross_entropy")?;
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut probs = vec![0.0; n * k];
    let mut loss = 0.0;
    for (r, row) in z.data().chunks_exact(k).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[labels[r]];
        for (p, v) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
            *p = (v - lse).exp();
        }
    }
    let value = Tensor::scalar(loss / n as f64);
    let labels = labels.to_vec();
    Ok(logits.tape().record(
        "cross_entropy",
        &[logits],
        value,
        Box::new(move |_, g| {
            let scale = g.data()[0] / n as f64;
            let mut dx = probs.clone();
            for (r, &l) in labels.iter().enumerate() {
                dx[r * k + l] -= 1.0;
            }
            for v in &mut dx {
                *v *= scale;
            }
            vec![Some(Tensor::from_parts(vec![n, k], dx))]
        }),
    ))
}
