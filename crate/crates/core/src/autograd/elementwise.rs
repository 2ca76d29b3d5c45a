use super::tape::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<'t> Var<'t> {
    /// Applies `f` elementwise; `df(x, y)` is the local derivative given the
    /// input `x` and output `y`.
    fn unary(
        self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: fn(f64, f64) -> f64,
    ) -> Var<'t> {
        let value = self.value().map(f);
        self.tape().record(
            op,
            &[self],
            value,
            Box::new(move |ctx, g| {
                let x = ctx.inputs[0].data();
                let y = ctx.output.data();
                let data = g
                    .data()
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        )
    }

    pub fn relu(self) -> Var<'t> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary("sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn abs(self) -> Var<'t> {
        self.unary("abs", f64::abs, |x, _| x.signum() * (x != 0.0) as u8 as f64)
    }

    pub fn square(self) -> Var<'t> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = self.value().map(|x| x * c);
        self.tape().record(
            "scale",
            &[self],
            value,
            Box::new(move |_, g| vec![Some(g.map(|v| v * c))]),
        )
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let value = self.value().map(|x| x + c);
        self.tape()
            .record("add_scalar", &[self], value, Box::new(|_, g| vec![Some(g.clone())]))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x + y)?;
        Ok(self.tape().record(
            "add",
            &[self, other],
            value,
            Box::new(|ctx, g| {
                vec![
                    ctx.needs[0].then(|| g.clone()),
                    ctx.needs[1].then(|| g.clone()),
                ]
            }),
        ))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x - y)?;
        Ok(self.tape().record(
            "sub",
            &[self, other],
            value,
            Box::new(|ctx, g| {
                vec![
                    ctx.needs[0].then(|| g.clone()),
                    ctx.needs[1].then(|| g.map(|v| -v)),
                ]
            }),
        ))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x * y)?;
        Ok(self.tape().record(
            "mul",
            &[self, other],
            value,
            Box::new(|ctx, g| {
                let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
                vec![
                    ctx.needs[0].then(|| g.zip_map(b, |g, y| g * y).unwrap()),
                    ctx.needs[1].then(|| g.zip_map(a, |g, x| g * x).unwrap()),
                ]
            }),
        ))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(self) -> Var<'t> {
        let value = Tensor::scalar(self.value().sum());
        self.tape().record(
            "sum",
            &[self],
            value,
            Box::new(|ctx, g| vec![Some(Tensor::full(ctx.inputs[0].shape(), g.data()[0]))]),
        )
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let n = v.numel() as f64;
        let value = Tensor::scalar(v.sum() / n);
        self.tape().record(
            "mean",
            &[self],
            value,
            Box::new(move |ctx, g| {
                vec![Some(Tensor::full(ctx.inputs[0].shape(), g.data()[0] / n))]
            }),
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(self.tape().record(
            "reshape",
            &[self],
            value,
            Box::new(|ctx, g| vec![Some(g.reshape(ctx.inputs[0].shape()).unwrap())]),
        ))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
