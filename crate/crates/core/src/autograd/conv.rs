use super::kernels::{matmul_abt_acc, matmul_acc, transpose};
use super::tape::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds one image (C×H×W) into a (C·k·k)×(OH·OW) patch matrix.
fn im2col(x: &[f64], g: &Geometry, col: &mut [f64]) {
    let p = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oh in 0..g.oh {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.ow..(oh + 1) * g.ow];
                    if ih < 0 || ih >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, v) in line.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        *v = if iw >= 0 && iw < g.w as isize {
                            src[iw as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im(col: &[f64], g: &Geometry, x: &mut [f64]) {
    let p = g.cols();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &col[row * p..(row + 1) * p];
                for oh in 0..g.oh {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    let line = &src[oh * g.ow..(oh + 1) * g.ow];
                    for (ow, v) in line.iter().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation over an NCHW batch with a square O×C×k×k kernel.
pub fn conv2d<'t>(
    input: Var<'t>,
    weight: Var<'t>,
    bias: Option<Var<'t>>,
    stride: usize,
    padding: usize,
) -> Result<Var<'t>> {
    let x = input.value();
    let wv = weight.value();
    let (n, c, h, w) = x.dims4("conv2d")?;
    let (o, wc, kh, kw) = wv.dims4("conv2d")?;
    if wc != c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c} channels but weight expects {wc}"),
        ));
    }
    if kh != kw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel must be square, got {kh}x{kw}"),
        ));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d stride must be at least 1"));
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})"),
        ));
    }
    let bias_val = match bias {
        Some(b) => {
            let bv = b.value();
            if bv.shape() != [o] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias shape {:?} does not match {o} output channels", bv.shape()),
                ));
            }
            Some(bv)
        }
        None => None,
    };
    let g = Geometry {
        c,
        h,
        w,
        k: kh,
        stride,
        pad: padding,
        oh: (h + 2 * padding - kh) / stride + 1,
        ow: (w + 2 * padding - kw) / stride + 1,
    };
    let (kk, p) = (g.rows(), g.cols());

    let mut out = vec![0.0; n * o * p];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; kk * p]
    };
    for b in 0..n {
        let xb = &x.data()[b * c * h * w..(b + 1) * c * h * w];
        let ob = &mut out[b * o * p..(b + 1) * o * p];
        if let Some(bv) = &bias_val {
            for (oc, row) in ob.chunks_exact_mut(p).enumerate() {
                row.fill(bv.data()[oc]);
            }
        }
        let patches = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, &g, &mut col);
            &col
        };
        matmul_acc(ob, wv.data(), patches, o, kk, p);
    }
    let value = Tensor::from_parts(vec![n, o, g.oh, g.ow], out);

    let mut inputs = vec![input, weight];
    inputs.extend(bias);
    let has_bias = bias.is_some();
    Ok(input.tape().record(
        "conv2d",
        &inputs,
        value,
        Box::new(move |ctx, gy| {
            let x = ctx.inputs[0];
            let wv = ctx.inputs[1];
            let gy = gy.data();
            let mut dx = ctx.needs[0].then(|| vec![0.0; x.numel()]);
            let mut dw = ctx.needs[1].then(|| vec![0.0; wv.numel()]);
            let wt = dx.as_ref().map(|_| transpose(wv.data(), o, kk));
            let mut col = vec![0.0; if g.is_pointwise() { 0 } else { kk * p }];
            let mut dcol = vec![0.0; kk * p];
            for b in 0..n {
                let gyb = &gy[b * o * p..(b + 1) * o * p];
                if let Some(dw) = dw.as_mut() {
                    let xb = &x.data()[b * c * h * w..(b + 1) * c * h * w];
                    let patches = if g.is_pointwise() {
                        xb
                    } else {
                        im2col(xb, &g, &mut col);
                        &col
                    };
                    matmul_abt_acc(dw, gyb, patches, o, p, kk);
                }
                if let (Some(dx), Some(wt)) = (dx.as_mut(), wt.as_ref()) {
                    let dxb = &mut dx[b * c * h * w..(b + 1) * c * h * w];
                    if g.is_pointwise() {
                        matmul_acc(dxb, wt, gyb, kk, o, p);
                    } else {
                        dcol.fill(0.0);
                        matmul_acc(&mut dcol, wt, gyb, kk, o, p);
                        col2im(&dcol, &g, dxb);
                    }
                }
            }
            let mut grads = vec![
                dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
                dw.map(|d| Tensor::from_parts(wv.shape().to_vec(), d)),
            ];
            if has_bias {
                grads.push(ctx.needs[2].then(|| {
                    let mut db = vec![0.0; o];
                    for b in 0..n {
                        for (oc, acc) in db.iter_mut().enumerate() {
                            let start = (b * o + oc) * p;
                            *acc += gy[start..start + p].iter().sum::<f64>();
                        }
                    }
                    Tensor::from_parts(vec![o], db)
                }));
            }
            grads
        }),
    ))
}
