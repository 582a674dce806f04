use super::conv::{avg_pool2d_backward, avg_pool2d_forward, conv2d_backward, conv2d_forward, ConvGeometry};
use super::gemm::gemm;
use super::{AutodiffError, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Which cubic is added to the rounded value in [`Graph::soft_round`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftRoundSign {
    /// `round(x) + (round(x) - x)^3`
    #[default]
    Negative,
    /// `round(x) + (x - round(x))^3`
    Positive,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeometry },
    AvgPool2d { input: Var, size: usize },
    Sigmoid(Var),
    Tanh(Var),
    Reciprocal(Var),
    Sum(Var),
    Mean(Var),
    L1(Var),
    Clamp { input: Var, lo: f64, hi: f64 },
    ScalarMul(Var, f64),
    AddScalar(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { input: Var, axis: usize, start: usize },
    Permute { input: Var, axes: Vec<usize> },
    SoftRound { input: Var, sign: SoftRoundSign },
    Kwta { input: Var, mask: Vec<bool> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Tape of tensor operations. Build a fresh graph per forward pass, call
/// [`Graph::backward`] once on a scalar, then read gradients of the leaves.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, left: a.to_vec(), right: b.to_vec() }
}

fn invalid(op: &'static str, reason: impl Into<String>) -> AutodiffError {
    AutodiffError::InvalidArgument { op, reason: reason.into() }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each output position of a permutation, the source index in the input.
fn permute_indices(in_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n: usize = out_shape.iter().product();
    let mut idx = Vec::with_capacity(n);
    let mut counter = vec![0usize; out_shape.len()];
    let mut src = 0usize;
    for _ in 0..n {
        idx.push(src);
        for d in (0..out_shape.len()).rev() {
            counter[d] += 1;
            src += src_strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    idx
}

/// Winner mask of k-winners-take-all over each row of the last axis.
/// Exactly `min(k, len)` entries win; equal values favour the lower index.
pub fn kwta_mask(values: &[f64], row_len: usize, k: usize) -> Vec<bool> {
    let mut mask = vec![false; values.len()];
    if row_len == 0 {
        return mask;
    }
    let k = k.min(row_len);
    let mut order: Vec<usize> = (0..row_len).collect();
    for (row, m) in values.chunks(row_len).zip(mask.chunks_mut(row_len)) {
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        let cmp = |&a: &usize, &b: &usize| row[b].total_cmp(&row[a]).then(a.cmp(&b));
        if k > 0 && k < row_len {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        for &i in &order[..k] {
            m[i] = true;
        }
    }
    mask
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward target with respect to `v`, if it
    /// participates in the computation.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        node: Op,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(out, node, &[a, b]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, node: Op) -> Var {
        let out = self.value(x).map(f);
        self.push_op(out, node, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push_op(out, Op::MatMul(a, b), &[a, b]))
    }

    /// 2-D cross-correlation over NCHW input with `[C_out, C_in, kh, kw]`
    /// weights and an optional `[C_out]` bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, AutodiffError> {
        let geom = ConvGeometry::new(self.shape(input), self.shape(weight), stride, padding)?;
        if let Some(b) = bias {
            if self.shape(b) != [geom.c_out] {
                return Err(mismatch("conv2d bias", self.shape(b), &[geom.c_out]));
            }
        }
        let out = conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let out = Tensor::new(geom.output_shape().to_vec(), out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push_op(out, Op::Conv2d { input, weight, bias, geom }, &inputs))
    }

    /// Non-overlapping `size x size` mean pooling of an NCHW tensor whose
    /// spatial dimensions are multiples of `size`.
    pub fn avg_pool2d(&mut self, input: Var, size: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(input).to_vec();
        if shape.len() != 4 || size == 0 || shape[2] % size != 0 || shape[3] % size != 0 {
            return Err(invalid("avg_pool2d", format!("shape {shape:?} not divisible by window {size}")));
        }
        let out = avg_pool2d_forward(&shape, size, self.value(input).data());
        let out = Tensor::new(vec![shape[0], shape[1], shape[2] / size, shape[3] / size], out)?;
        Ok(self.push_op(out, Op::AvgPool2d { input, size }, &[input]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let f = |v: f64| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        };
        self.unary(x, f, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn reciprocal(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v, Op::Reciprocal(x))
    }

    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn reduce_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel().max(1) as f64;
        self.push_op(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Sum of absolute values.
    pub fn reduce_l1(&mut self, x: Var) -> Var {
        let s = self.value(x).l1_norm();
        self.push_op(Tensor::scalar(s), Op::L1(x), &[x])
    }

    /// Gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid("clamp", format!("empty range [{lo}, {hi}]")));
        }
        Ok(self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { input: x, lo, hi }))
    }

    pub fn scalar_mul(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::ScalarMul(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(mismatch("reshape", t.shape(), shape));
        }
        let out = t.clone().reshape(shape)?;
        Ok(self.push_op(out, Op::Reshape(x), &[x]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = inputs.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push_op(out, Op::Concat { inputs: inputs.to_vec(), axis }, inputs))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(invalid("narrow", format!("[{start}, {}) on axis {axis} of {shape:?}", start + len)));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push_op(out, Op::Narrow { input: x, axis, start }, &[x]))
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || !axes.iter().all(|&a| a < shape.len() && !std::mem::replace(&mut seen[a], true)) {
            return Err(invalid("permute", format!("{axes:?} is not a permutation of rank {}", shape.len())));
        }
        let idx = permute_indices(&shape, axes);
        let src = self.value(x).data();
        let data = idx.iter().map(|&i| src[i]).collect();
        let out = Tensor::new(axes.iter().map(|&a| shape[a]).collect(), data)?;
        Ok(self.push_op(out, Op::Permute { input: x, axes: axes.to_vec() }, &[x]))
    }

    /// Rounding with a cubic correction that keeps a non-zero derivative.
    pub fn soft_round(&mut self, x: Var, sign: SoftRoundSign) -> Var {
        let f = move |v: f64| {
            let r = v.round();
            match sign {
                SoftRoundSign::Negative => r + (r - v).powi(3),
                SoftRoundSign::Positive => r + (v - r).powi(3),
            }
        };
        self.unary(x, f, Op::SoftRound { input: x, sign })
    }

    /// Keeps the `k` largest entries of every row of the last axis and zeros
    /// the rest. The gradient flows only through the winners.
    pub fn kwta(&mut self, x: Var, k: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let row = *t.shape().last().ok_or_else(|| invalid("kwta", "scalar input"))?;
        let mask = kwta_mask(t.data(), row, k);
        let data = t.data().iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push_op(out, Op::Kwta { input: x, mask }, &[x]))
    }

    /// Reverse-mode accumulation from a one-element `loss`. Gradients from
    /// several uses of a node are summed.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            for (input, contribution) in self.local_grads(id, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot => *slot = Some(contribution),
                }
            }
            let shape = self.nodes[id].value.shape().to_vec();
            self.nodes[id].grad = Some(Tensor::new(shape, g)?);
        }
        Ok(())
    }

    fn local_grads(&self, id: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[id];
        let y = node.value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let zip_map = |x: &[f64], f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<f64> {
            g.iter().zip(x).zip(y).map(|((&g, &x), &y)| f(g, x, y)).collect()
        };
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                vec![
                    (*a, g.iter().zip(vb).map(|(g, b)| g * b).collect()),
                    (*b, g.iter().zip(va).map(|(g, a)| g * a).collect()),
                ]
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut out = Vec::new();
                if needs(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, false, val(*b), true, &mut ga, false);
                    out.push((*a, ga));
                }
                if needs(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, val(*a), true, g, false, &mut gb, false);
                    out.push((*b, gb));
                }
                out
            }
            Op::Conv2d { input, weight, bias, geom } => {
                let grads = conv2d_backward(geom, val(*input), val(*weight), g, needs(*input), needs(*weight));
                let mut out = Vec::new();
                if let Some(gi) = grads.input {
                    out.push((*input, gi));
                }
                if let Some(gw) = grads.weight {
                    out.push((*weight, gw));
                }
                if let Some(b) = bias {
                    let plane = geom.out_h * geom.out_w;
                    let mut gb = vec![0.0; geom.c_out];
                    for (i, v) in g.iter().enumerate() {
                        gb[(i / plane) % geom.c_out] += v;
                    }
                    out.push((*b, gb));
                }
                out
            }
            Op::AvgPool2d { input, size } => {
                vec![(*input, avg_pool2d_backward(self.nodes[input.0].value.shape(), *size, g))]
            }
            Op::Sigmoid(x) => vec![(*x, zip_map(val(*x), &|g, _, y| g * y * (1.0 - y)))],
            Op::Tanh(x) => vec![(*x, zip_map(val(*x), &|g, _, y| g * (1.0 - y * y)))],
            Op::Reciprocal(x) => vec![(*x, zip_map(val(*x), &|g, _, y| -g * y * y))],
            Op::Sum(x) => vec![(*x, vec![g[0]; val(*x).len()])],
            Op::Mean(x) => {
                let n = val(*x).len();
                vec![(*x, vec![g[0] / n.max(1) as f64; n])]
            }
            Op::L1(x) => {
                let sgn = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
                vec![(*x, val(*x).iter().map(|&v| g[0] * sgn(v)).collect())]
            }
            Op::Clamp { input, lo, hi } => {
                vec![(*input, zip_map(val(*input), &|g, x, _| if x >= *lo && x <= *hi { g } else { 0.0 }))]
            }
            Op::ScalarMul(x, c) => vec![(*x, g.iter().map(|v| v * c).collect())],
            Op::AddScalar(x) | Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut parts: Vec<Vec<f64>> = inputs.iter().map(|v| Vec::with_capacity(val(*v).len())).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (p, v) in parts.iter_mut().zip(inputs) {
                        let chunk = self.nodes[v.0].value.shape()[*axis] * inner;
                        p.extend_from_slice(&g[pos..pos + chunk]);
                        pos += chunk;
                    }
                }
                inputs.iter().copied().zip(parts).collect()
            }
            Op::Narrow { input, axis, start } => {
                let in_shape = self.nodes[input.0].value.shape();
                let len = node.value.shape()[*axis];
                let outer: usize = in_shape[..*axis].iter().product();
                let inner: usize = in_shape[axis + 1..].iter().product();
                let mut gi = vec![0.0; val(*input).len()];
                for o in 0..outer {
                    let dst = (o * in_shape[*axis] + start) * inner;
                    let src = o * len * inner;
                    gi[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                vec![(*input, gi)]
            }
            Op::Permute { input, axes } => {
                let idx = permute_indices(self.nodes[input.0].value.shape(), axes);
                let mut gi = vec![0.0; g.len()];
                for (o, &i) in idx.iter().enumerate() {
                    gi[i] = g[o];
                }
                vec![(*input, gi)]
            }
            Op::SoftRound { input, sign } => {
                let f = |g: f64, x: f64, _| {
                    let d = x - x.round();
                    match sign {
                        SoftRoundSign::Negative => -3.0 * d * d * g,
                        SoftRoundSign::Positive => 3.0 * d * d * g,
                    }
                };
                vec![(*input, zip_map(val(*input), &f))]
            }
            Op::Kwta { input, mask } => {
                vec![(*input, g.iter().zip(mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect())]
            }
        }
    }
}
