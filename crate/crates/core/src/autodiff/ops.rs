use super::kernels::{self, split5, ConvGeom};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Operation recorded on a graph node.
///
/// Every op's backward rule is expressed in terms of other ops on this list,
/// so gradients can themselves be recorded and differentiated again. The only
/// exceptions are [`Op::Sqrt`] and its helper [`Op::SqrtGrad`].
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar(f64),
    Sqrt,
    /// `g * 0.5 / y`, zero where `y == 0`.
    SqrtGrad,
    Conv(ConvGeom),
    /// Adjoint of `Conv` w.r.t. its input; `out_shape` is the conv input shape.
    ConvTranspose {
        geom: ConvGeom,
        out_shape: Vec<usize>,
    },
    ConvWeightGrad {
        geom: ConvGeom,
        w_shape: Vec<usize>,
    },
    AddBias,
    ChannelSum,
    ChannelBroadcast(Vec<usize>),
    LeakyRelu(f64),
    /// `g * (x >= 0 ? 1 : slope)`; second input is the mask source.
    LeakyMask(f64),
    MatMul {
        ta: bool,
        tb: bool,
    },
    Reshape(Vec<usize>),
    Concat,
    Narrow {
        start: usize,
        len: usize,
    },
    Embed {
        start: usize,
        total: usize,
    },
    Sum,
    Expand(Vec<usize>),
    SumPerSample,
    ExpandPerSample(Vec<usize>),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Sqrt => "sqrt",
            Op::SqrtGrad => "sqrt_grad",
            Op::Conv(_) => "conv",
            Op::ConvTranspose { .. } => "conv_transpose",
            Op::ConvWeightGrad { .. } => "conv_weight_grad",
            Op::AddBias => "add_bias",
            Op::ChannelSum => "channel_sum",
            Op::ChannelBroadcast(_) => "channel_broadcast",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::LeakyMask(_) => "leaky_mask",
            Op::MatMul { .. } => "matmul",
            Op::Reshape(_) => "reshape",
            Op::Concat => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Embed { .. } => "embed",
            Op::Sum => "sum",
            Op::Expand(_) => "expand",
            Op::SumPerSample => "sum_per_sample",
            Op::ExpandPerSample(_) => "expand_per_sample",
        }
    }

    /// Whether the backward rule is built only from differentiable ops.
    pub fn second_order(&self) -> bool {
        !matches!(self, Op::Sqrt | Op::SqrtGrad)
    }

    pub(crate) fn forward<T: Real>(&self, xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let arity = |n: usize| -> Result<()> {
            if xs.len() == n {
                Ok(())
            } else {
                Err(Error::shape(
                    self.name(),
                    format!("expected {n} inputs, got {}", xs.len()),
                ))
            }
        };
        match self {
            Op::Leaf => Err(Error::shape("leaf", "leaves are not evaluated")),
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                arity(2)?;
                let (a, b) = (xs[0], xs[1]);
                same_shape(self.name(), a, b)?;
                let f: fn(T, T) -> T = match self {
                    Op::Add => |a, b| a + b,
                    Op::Sub => |a, b| a - b,
                    Op::Mul => |a, b| a * b,
                    _ => |a, b| a / b,
                };
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(a.shape().to_vec(), data)
            }
            Op::Scale(c) => {
                arity(1)?;
                let c = T::of(*c);
                Ok(xs[0].map(|v| v * c))
            }
            Op::AddScalar(c) => {
                arity(1)?;
                let c = T::of(*c);
                Ok(xs[0].map(|v| v + c))
            }
            Op::Sqrt => {
                arity(1)?;
                Ok(xs[0].map(|v| v.sqrt()))
            }
            Op::SqrtGrad => {
                arity(2)?;
                same_shape("sqrt_grad", xs[0], xs[1])?;
                let half = T::of(0.5);
                let data = xs[0]
                    .data()
                    .iter()
                    .zip(xs[1].data())
                    .map(|(&g, &y)| if y == T::zero() { T::zero() } else { g * half / y })
                    .collect();
                Tensor::new(xs[0].shape().to_vec(), data)
            }
            Op::Conv(geom) => {
                arity(2)?;
                kernels::conv(xs[0], xs[1], *geom)
            }
            Op::ConvTranspose { geom, out_shape } => {
                arity(2)?;
                kernels::conv_transpose(xs[0], xs[1], *geom, out_shape)
            }
            Op::ConvWeightGrad { geom, w_shape } => {
                arity(2)?;
                kernels::conv_weight_grad(xs[0], xs[1], *geom, w_shape)
            }
            Op::AddBias => {
                arity(2)?;
                let (x, b) = (xs[0], xs[1]);
                let (n, c, inner) = channel_view(x, "add_bias")?;
                if b.shape() != [c] {
                    return Err(Error::shape(
                        "add_bias",
                        format!("bias {:?} does not match {c} channels", b.shape()),
                    ));
                }
                let mut out = x.clone();
                let bd = b.data();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    *v = *v + bd[(i / inner) % c];
                }
                debug_assert_eq!(out.numel(), n * c * inner);
                Ok(out)
            }
            Op::ChannelSum => {
                arity(1)?;
                let (_, c, inner) = channel_view(xs[0], "channel_sum")?;
                let mut acc = vec![T::zero(); c];
                for (i, &v) in xs[0].data().iter().enumerate() {
                    let ch = (i / inner) % c;
                    acc[ch] = acc[ch] + v;
                }
                Tensor::new(vec![c], acc)
            }
            Op::ChannelBroadcast(shape) => {
                arity(1)?;
                let c = shape.get(1).copied().unwrap_or(0);
                if xs[0].shape() != [c] {
                    return Err(Error::shape(
                        "channel_broadcast",
                        format!("{:?} cannot broadcast over {shape:?}", xs[0].shape()),
                    ));
                }
                let inner: usize = shape[2..].iter().product();
                let v = xs[0].data();
                Ok(Tensor::from_fn(shape.clone(), |i| v[(i / inner) % c]))
            }
            Op::LeakyRelu(s) => {
                arity(1)?;
                let s = T::of(*s);
                Ok(xs[0].map(|v| if v >= T::zero() { v } else { v * s }))
            }
            Op::LeakyMask(s) => {
                arity(2)?;
                same_shape("leaky_mask", xs[0], xs[1])?;
                let s = T::of(*s);
                let data = xs[0]
                    .data()
                    .iter()
                    .zip(xs[1].data())
                    .map(|(&g, &x)| if x >= T::zero() { g } else { g * s })
                    .collect();
                Tensor::new(xs[0].shape().to_vec(), data)
            }
            Op::MatMul { ta, tb } => {
                arity(2)?;
                kernels::matmul(xs[0], xs[1], *ta, *tb)
            }
            Op::Reshape(shape) => {
                arity(1)?;
                xs[0].clone().reshaped(shape.clone())
            }
            Op::Concat => concat(xs),
            Op::Narrow { start, len } => {
                arity(1)?;
                narrow(xs[0], *start, *len)
            }
            Op::Embed { start, total } => {
                arity(1)?;
                embed(xs[0], *start, *total)
            }
            Op::Sum => {
                arity(1)?;
                if xs[0].numel() == 0 {
                    return Err(Error::Empty { op: "sum" });
                }
                Ok(Tensor::scalar(xs[0].sum()))
            }
            Op::Expand(shape) => {
                arity(1)?;
                if xs[0].numel() != 1 {
                    return Err(Error::shape("expand", "only scalars can be expanded"));
                }
                Ok(Tensor::full(shape.clone(), xs[0].item()))
            }
            Op::SumPerSample => {
                arity(1)?;
                let x = xs[0];
                let n = *x.shape().first().ok_or(Error::Empty { op: "sum_per_sample" })?;
                if x.numel() == 0 {
                    return Err(Error::Empty { op: "sum_per_sample" });
                }
                let per = x.numel() / n;
                let data = x.data().chunks(per).map(|c| c.iter().copied().sum()).collect();
                Tensor::new(vec![n], data)
            }
            Op::ExpandPerSample(shape) => {
                arity(1)?;
                let n = shape.first().copied().unwrap_or(0);
                if xs[0].shape() != [n] {
                    return Err(Error::shape(
                        "expand_per_sample",
                        format!("{:?} cannot expand over {shape:?}", xs[0].shape()),
                    ));
                }
                let per: usize = shape[1..].iter().product();
                let v = xs[0].data();
                Ok(Tensor::from_fn(shape.clone(), |i| v[i / per]))
            }
        }
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(
            op,
            format!("operands {:?} and {:?} differ", a.shape(), b.shape()),
        ))
    }
}

/// `(batch, channels, elements per channel)` of a tensor with a channel axis.
pub(crate) fn channel_view<T: Real>(x: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    if x.ndim() < 2 {
        return Err(Error::shape(op, format!("no channel axis in {:?}", x.shape())));
    }
    let inner = x.shape()[2..].iter().product();
    Ok((x.shape()[0], x.shape()[1], inner))
}

fn concat<T: Real>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
    let (n, _, inner) = channel_view(first, "concat")?;
    let mut total = 0;
    for x in xs {
        let (xn, xc, xi) = channel_view(x, "concat")?;
        if xn != n || xi != inner || x.shape()[2..] != first.shape()[2..] {
            return Err(Error::shape(
                "concat",
                format!(
                    "non-channel extents differ: {:?} vs {:?}",
                    first.shape(),
                    x.shape()
                ),
            ));
        }
        total += xc;
    }
    let mut data = Vec::with_capacity(n * total * inner);
    for s in 0..n {
        for x in xs {
            let c = x.shape()[1];
            data.extend_from_slice(&x.data()[s * c * inner..(s + 1) * c * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[1] = total;
    Tensor::new(shape, data)
}

fn narrow<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let (n, c, inner) = channel_view(x, "narrow")?;
    if start + len > c {
        return Err(Error::shape(
            "narrow",
            format!("channels {start}..{} out of {c}", start + len),
        ));
    }
    let mut data = Vec::with_capacity(n * len * inner);
    for s in 0..n {
        let base = (s * c + start) * inner;
        data.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[1] = len;
    Tensor::new(shape, data)
}

fn embed<T: Real>(x: &Tensor<T>, start: usize, total: usize) -> Result<Tensor<T>> {
    let (n, c, inner) = channel_view(x, "embed")?;
    if start + c > total {
        return Err(Error::shape(
            "embed",
            format!("channels {start}..{} out of {total}", start + c),
        ));
    }
    let mut shape = x.shape().to_vec();
    shape[1] = total;
    let mut out = Tensor::zeros(shape);
    for s in 0..n {
        let dst = (s * total + start) * inner;
        out.data_mut()[dst..dst + c * inner]
            .copy_from_slice(&x.data()[s * c * inner..(s + 1) * c * inner]);
    }
    Ok(out)
}

/// Output shape of a transposed convolution for a layer input of shape `x_shape`.
pub(crate) fn transpose_out_shape(
    x_shape: &[usize],
    w_shape: &[usize],
    geom: ConvGeom,
) -> Result<Vec<usize>> {
    let (n, _, input) = split5(x_shape, "conv_transpose")?;
    let (_, cout, kernel) = split5(w_shape, "conv_transpose")?;
    let mut out = [0; 3];
    for a in 0..3 {
        let full = (input[a] - 1) * geom.stride[a] + kernel[a];
        if full <= 2 * geom.pad[a] {
            return Err(Error::geometry("conv_transpose", "zero-size output"));
        }
        out[a] = full - 2 * geom.pad[a];
    }
    Ok(kernels::join5(x_shape.len() == 5, n, cout, out))
}
