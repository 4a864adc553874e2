use std::collections::BTreeMap;

use super::kernels::ConvGeom;
use super::ops::{channel_view, transpose_out_shape, Op};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    inputs: Vec<Var>,
    tracked: bool,
}

/// Gradients of a scalar with respect to every tracked leaf.
#[derive(Debug, Default)]
pub struct GradientMap<T> {
    grads: BTreeMap<Var, Tensor<T>>,
}

impl<T: Real> GradientMap<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor<T>)> {
        self.grads.iter().map(|(&v, t)| (v, t))
    }
}

/// Append-only record of tensor operations supporting reverse-mode
/// differentiation, including differentiation through recorded gradients.
///
/// Nodes are appended in evaluation order, so node indices are a topological
/// order. One graph is owned by one forward/backward pass at a time.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A graph that stores values only. Outputs are never tracked.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. `tracked` leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            inputs: Vec::new(),
            tracked: tracked && self.recording,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Frees the stored value of `v` in an inference graph. The node must not
    /// be read afterwards. No-op while recording, since backward needs it.
    pub fn discard(&mut self, v: Var) {
        if !self.recording {
            self.nodes[v.0].value = Tensor::zeros(vec![0]);
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn inputs(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].inputs
    }

    /// `(op, inputs)` of every node in evaluation order.
    pub fn records(&self) -> impl Iterator<Item = (Var, &Op, &[Var])> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (Var(i), &n.op, n.inputs.as_slice()))
    }

    fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let value = {
            let xs: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            op.forward(&xs)?
        };
        let tracked = self.recording && inputs.iter().any(|v| self.nodes[v.0].tracked);
        let (op, inputs) = if self.recording {
            (op, inputs.to_vec())
        } else {
            (Op::Leaf, Vec::new())
        };
        self.nodes.push(Node {
            value,
            op,
            inputs,
            tracked,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Re-evaluates every recorded op from the stored leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut out: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = if node.op == Op::Leaf {
                node.value.clone()
            } else {
                let xs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &out[v.0]).collect();
                node.op.forward(&xs)?
            };
            out.push(v);
        }
        Ok(out)
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Div, &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.apply(Op::Scale(c), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.apply(Op::AddScalar(c), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::Mul, &[x, x])
    }

    /// Elementwise square root. Not twice differentiable.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::Sqrt, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::LeakyRelu(0.0), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.apply(Op::LeakyRelu(slope), &[x])
    }

    // ---- layers ---------------------------------------------------------

    /// Cross-correlation of `x` (`[N, C, (D,) H, W]`) with `w` (`[O, C, (kd,) kh, kw]`),
    /// plus an optional per-channel bias.
    pub fn conv(&mut self, x: Var, w: Var, bias: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let y = self.apply(Op::Conv(geom), &[x, w])?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Transposed convolution layer; `w` is `[C_in, C_out, k..]`.
    pub fn conv_transpose(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    ) -> Result<Var> {
        let out_shape = transpose_out_shape(self.shape(x), self.shape(w), geom)?;
        let y = self.apply(Op::ConvTranspose { geom, out_shape }, &[x, w])?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.apply(Op::AddBias, &[x, b])
    }

    /// `x · wᵀ + b` for `x: [N, F]`, `w: [O, F]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(
                "linear",
                format!("input {xs:?} incompatible with weights {ws:?}"),
            ));
        }
        let y = self.apply(Op::MatMul { ta: false, tb: true }, &[x, w])?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul { ta: false, tb: false }, &[a, b])
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.apply(Op::Reshape(shape.into()), &[x])
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let n = *s.first().ok_or(Error::Empty { op: "flatten" })?;
        let rest = s[1..].iter().product::<usize>();
        self.reshape(x, vec![n, rest])
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        self.apply(Op::Concat, xs)
    }

    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Op::Narrow { start, len }, &[x])
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        if n == 0 {
            return Err(Error::Empty { op: "mean" });
        }
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sum_per_sample(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::SumPerSample, &[x])
    }

    pub fn mean_per_sample(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let per = s.iter().skip(1).product::<usize>();
        if s.is_empty() || per == 0 {
            return Err(Error::Empty { op: "mean_per_sample" });
        }
        let total = self.sum_per_sample(x)?;
        self.scale(total, 1.0 / per as f64)
    }

    /// Euclidean norm over all elements, or per sample over the non-batch axes.
    pub fn l2_norm(&mut self, x: Var, per_sample: bool) -> Result<Var> {
        if self.value(x).numel() == 0 {
            return Err(Error::Empty { op: "l2_norm" });
        }
        let sq = self.square(x)?;
        let s = if per_sample {
            self.sum_per_sample(sq)?
        } else {
            self.sum(sq)?
        };
        self.sqrt(s)
    }

    // ---- differentiation ------------------------------------------------

    /// Gradients of the scalar `output` with respect to `wrt`.
    ///
    /// With `create_graph`, the gradient computation is itself recorded and the
    /// returned vars can be differentiated again; every op on the path must then
    /// support second-order differentiation. Without it, gradient values are
    /// stored as untracked constants.
    pub fn grad(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        if self.value(output).numel() != 1 {
            return Err(Error::NonScalarOutput {
                shape: self.shape(output).to_vec(),
            });
        }
        if !self.is_tracked(output) {
            return Err(Error::Detached);
        }
        let saved = self.recording;
        self.recording = create_graph;
        let result = self.grad_inner(output, wrt, create_graph);
        self.recording = saved;
        result
    }

    fn grad_inner(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        let mut grads: Vec<Option<Var>> = vec![None; output.0 + 1];
        let seed = Tensor::ones(self.shape(output).to_vec());
        grads[output.0] = Some(self.constant(seed));
        for i in (0..=output.0).rev() {
            let Some(gy) = grads[i] else { continue };
            let node = &self.nodes[i];
            if !node.tracked || node.op == Op::Leaf {
                continue;
            }
            if create_graph && !node.op.second_order() {
                return Err(Error::UnsupportedSecondOrder {
                    op: node.op.name(),
                });
            }
            let op = node.op.clone();
            let inputs = node.inputs.clone();
            let needs: Vec<bool> = inputs.iter().map(|v| self.nodes[v.0].tracked).collect();
            let contributions = self.backward_rule(&op, &inputs, Var(i), gy, &needs)?;
            for ((inp, need), g) in inputs.iter().zip(&needs).zip(contributions) {
                let (true, Some(g)) = (*need, g) else { continue };
                grads[inp.0] = Some(match grads[inp.0] {
                    None => g,
                    Some(prev) => self.add(prev, g)?,
                });
            }
        }
        wrt.iter()
            .map(|&v| match grads.get(v.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let z = Tensor::zeros(self.shape(v).to_vec());
                    Ok(self.constant(z))
                }
            })
            .collect()
    }

    /// Reverse-mode gradients of a scalar with respect to every tracked leaf.
    ///
    /// Intermediate gradient nodes are discarded afterwards; the graph is left
    /// as it was before the call.
    pub fn backward(&mut self, output: Var) -> Result<GradientMap<T>> {
        let leaves: Vec<Var> = (0..=output.0.min(self.nodes.len().saturating_sub(1)))
            .filter(|&i| self.nodes[i].tracked && self.nodes[i].op == Op::Leaf)
            .map(Var)
            .collect();
        let mark = self.nodes.len();
        let gvars = self.grad(output, &leaves, false)?;
        let mut uses: BTreeMap<Var, usize> = BTreeMap::new();
        for &g in &gvars {
            *uses.entry(g).or_default() += 1;
        }
        let mut grads = BTreeMap::new();
        for (leaf, g) in leaves.into_iter().zip(gvars) {
            let left = uses.get_mut(&g).expect("counted above");
            *left -= 1;
            // Several leaves can share one gradient node; move it out on the last use.
            let t = if g.0 >= mark && *left == 0 {
                std::mem::replace(&mut self.nodes[g.0].value, Tensor::zeros(Vec::new()))
            } else {
                self.nodes[g.0].value.clone()
            };
            grads.insert(leaf, t);
        }
        self.nodes.truncate(mark);
        Ok(GradientMap { grads })
    }

    /// Gradient of `f(x)` summed over the batch, with respect to `x`, recorded
    /// on the graph so that functions of it can be differentiated again.
    ///
    /// `x` must be a tracked leaf; `f` must return per-sample scalars.
    pub fn input_gradient<F>(&mut self, x: Var, f: F) -> Result<Var>
    where
        F: FnOnce(&mut Self, Var) -> Result<Var>,
    {
        let out = f(self, x)?;
        let total = self.sum(out)?;
        Ok(self.grad(total, &[x], true)?[0])
    }

    #[allow(clippy::too_many_lines)]
    fn backward_rule(
        &mut self,
        op: &Op,
        inputs: &[Var],
        out: Var,
        gy: Var,
        needs: &[bool],
    ) -> Result<Vec<Option<Var>>> {
        let need = |i: usize| needs.get(i).copied().unwrap_or(false);
        Ok(match op {
            Op::Leaf => Vec::new(),
            Op::Add => vec![Some(gy), Some(gy)],
            Op::Sub => {
                let gb = if need(1) { Some(self.scale(gy, -1.0)?) } else { None };
                vec![Some(gy), gb]
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = if need(0) { Some(self.mul(gy, b)?) } else { None };
                let gb = if need(1) { Some(self.mul(gy, a)?) } else { None };
                vec![ga, gb]
            }
            Op::Div => {
                let b = inputs[1];
                let ga = if need(0) { Some(self.div(gy, b)?) } else { None };
                let gb = if need(1) {
                    let t = self.mul(gy, out)?;
                    let t = self.div(t, b)?;
                    Some(self.scale(t, -1.0)?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            Op::Scale(c) => vec![Some(self.scale(gy, *c)?)],
            Op::AddScalar(_) => vec![Some(gy)],
            Op::Sqrt => vec![Some(self.apply(Op::SqrtGrad, &[gy, out])?)],
            Op::SqrtGrad => return Err(Error::UnsupportedSecondOrder { op: "sqrt_grad" }),
            Op::Conv(geom) => {
                let (x, w) = (inputs[0], inputs[1]);
                let gx = if need(0) {
                    let out_shape = self.shape(x).to_vec();
                    Some(self.apply(Op::ConvTranspose { geom: *geom, out_shape }, &[gy, w])?)
                } else {
                    None
                };
                let gw = if need(1) {
                    let w_shape = self.shape(w).to_vec();
                    Some(self.apply(Op::ConvWeightGrad { geom: *geom, w_shape }, &[x, gy])?)
                } else {
                    None
                };
                vec![gx, gw]
            }
            Op::ConvTranspose { geom, .. } => {
                let (g, w) = (inputs[0], inputs[1]);
                let dg = if need(0) {
                    Some(self.apply(Op::Conv(*geom), &[gy, w])?)
                } else {
                    None
                };
                let dw = if need(1) {
                    let w_shape = self.shape(w).to_vec();
                    Some(self.apply(Op::ConvWeightGrad { geom: *geom, w_shape }, &[gy, g])?)
                } else {
                    None
                };
                vec![dg, dw]
            }
            Op::ConvWeightGrad { geom, .. } => {
                let (x, g) = (inputs[0], inputs[1]);
                let dx = if need(0) {
                    let out_shape = self.shape(x).to_vec();
                    Some(self.apply(Op::ConvTranspose { geom: *geom, out_shape }, &[g, gy])?)
                } else {
                    None
                };
                let dg = if need(1) {
                    Some(self.apply(Op::Conv(*geom), &[x, gy])?)
                } else {
                    None
                };
                vec![dx, dg]
            }
            Op::AddBias => {
                let gb = if need(1) {
                    Some(self.apply(Op::ChannelSum, &[gy])?)
                } else {
                    None
                };
                vec![Some(gy), gb]
            }
            Op::ChannelSum => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.apply(Op::ChannelBroadcast(shape), &[gy])?)]
            }
            Op::ChannelBroadcast(_) => vec![Some(self.apply(Op::ChannelSum, &[gy])?)],
            Op::LeakyRelu(s) => vec![Some(self.apply(Op::LeakyMask(*s), &[gy, inputs[0]])?)],
            Op::LeakyMask(s) => vec![Some(self.apply(Op::LeakyMask(*s), &[gy, inputs[1]])?), None],
            Op::MatMul { ta, tb } => {
                let (a, b) = (inputs[0], inputs[1]);
                let mm = |g: &mut Self, x: Var, y: Var, ta: bool, tb: bool| {
                    g.apply(Op::MatMul { ta, tb }, &[x, y])
                };
                let (ga, gb) = match (ta, tb) {
                    (false, false) => (
                        need(0).then(|| mm(self, gy, b, false, true)),
                        need(1).then(|| mm(self, a, gy, true, false)),
                    ),
                    (false, true) => (
                        need(0).then(|| mm(self, gy, b, false, false)),
                        need(1).then(|| mm(self, gy, a, true, false)),
                    ),
                    (true, false) => (
                        need(0).then(|| mm(self, b, gy, false, true)),
                        need(1).then(|| mm(self, a, gy, false, false)),
                    ),
                    (true, true) => (
                        need(0).then(|| mm(self, b, gy, true, true)),
                        need(1).then(|| mm(self, gy, a, true, true)),
                    ),
                };
                vec![ga.transpose()?, gb.transpose()?]
            }
            Op::Reshape(_) => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.reshape(gy, shape)?)]
            }
            Op::Concat => {
                let mut start = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for (i, &x) in inputs.iter().enumerate() {
                    let len = self.shape(x)[1];
                    out.push(if need(i) {
                        Some(self.narrow(gy, start, len)?)
                    } else {
                        None
                    });
                    start += len;
                }
                out
            }
            Op::Narrow { start, .. } => {
                let total = self.shape(inputs[0])[1];
                vec![Some(self.apply(
                    Op::Embed {
                        start: *start,
                        total,
                    },
                    &[gy],
                )?)]
            }
            Op::Embed { start, .. } => {
                let (_, len, _) = channel_view(self.value(inputs[0]), "embed")?;
                vec![Some(self.narrow(gy, *start, len)?)]
            }
            Op::Sum => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.apply(Op::Expand(shape), &[gy])?)]
            }
            Op::Expand(_) => vec![Some(self.sum(gy)?)],
            Op::SumPerSample => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.apply(Op::ExpandPerSample(shape), &[gy])?)]
            }
            Op::ExpandPerSample(_) => vec![Some(self.sum_per_sample(gy)?)],
        })
    }
}
