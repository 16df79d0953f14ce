use super::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        pad_left: usize,
    },
    // winners[c] is the row that produced column c of the output
    MaxAxis0 {
        input: Var,
        winners: Vec<usize>,
    },
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    Softmax(Var),
    Concat {
        inputs: Vec<Var>,
        widths: Vec<usize>,
    },
    Stack(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    RowScale(Var, Var),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Slice {
        input: Var,
        start: usize,
    },
    SumAxis1(Var),
    Sum(Var),
    L1Norm(Var),
    BceWithLogits {
        logits: Var,
        labels: Vec<f64>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddScalar(a, b) | RowScale(a, b) => {
                vec![*a, *b]
            }
            Transpose(a) | Reshape(a) | Relu(a) | Sigmoid(a) | Abs(a) | Softmax(a) | Scale(a, _)
            | SumAxis1(a) | Sum(a) | L1Norm(a) => vec![*a],
            Conv1d {
                input,
                weight,
                bias,
                ..
            } => vec![*input, *weight, *bias],
            MaxAxis0 { input, .. } | Slice { input, .. } => vec![*input],
            Concat { inputs, .. } => inputs.clone(),
            Stack(inputs) => inputs.clone(),
            Gather { table, .. } => vec![*table],
            BceWithLogits { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Tape of executed operations. Nodes are appended in execution order, so
/// the node list is already topologically sorted.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const BCE_EPS: f64 = 1e-12;

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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated into a leaf by the last [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Clears leaf gradients so the graph can be differentiated again.
    pub fn reset(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.consumed = false;
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Tensor { shape, data },
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims2(&self, kernel: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(TensorError::InvalidShape {
                kernel,
                shape: s.to_vec(),
            }),
        }
    }

    fn same_shape(&self, kernel: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                kernel,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = &self.nodes[a.0].value;
        let shape = t.shape.clone();
        let data = t.data.iter().map(|&x| f(x)).collect();
        self.push(shape, data, op)
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                kernel: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("transpose", a)?;
        let x = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        Ok(self.push(vec![c, r], out, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let numel = self.value(a).numel();
        if shape.iter().product::<usize>() != numel {
            return Err(TensorError::ShapeMismatch {
                kernel: "reshape",
                left: self.shape(a).to_vec(),
                right: shape,
            });
        }
        let data = self.value(a).data().to_vec();
        Ok(self.push(shape, data, Op::Reshape(a)))
    }

    /// 1-D convolution over the token axis with zero padding so the output
    /// keeps the input length.
    ///
    /// `input: [len, c_in]`, `weight: [width, c_in, c_out]`, `bias: [c_out]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (len, c_in) = self.dims2("conv1d", input)?;
        let (width, w_in, c_out) = match *self.shape(weight) {
            [w, i, o] => (w, i, o),
            ref s => {
                return Err(TensorError::InvalidShape {
                    kernel: "conv1d",
                    shape: s.to_vec(),
                })
            }
        };
        if w_in != c_in || width == 0 {
            return Err(TensorError::ShapeMismatch {
                kernel: "conv1d",
                left: self.shape(input).to_vec(),
                right: self.shape(weight).to_vec(),
            });
        }
        if self.shape(bias) != [c_out] {
            return Err(TensorError::ShapeMismatch {
                kernel: "conv1d",
                left: self.shape(weight).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let pad_left = (width - 1) / 2;
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(len * c_out);
        for _ in 0..len {
            out.extend_from_slice(b);
        }
        for t in 0..len {
            let row = &mut out[t * c_out..(t + 1) * c_out];
            for j in 0..width {
                let Some(src) = (t + j).checked_sub(pad_left).filter(|&s| s < len) else {
                    continue;
                };
                let xs = &x[src * c_in..(src + 1) * c_in];
                let wj = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
                for (c, &xv) in xs.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wc = &wj[c * c_out..(c + 1) * c_out];
                    for (o, &wv) in row.iter_mut().zip(wc) {
                        *o += xv * wv;
                    }
                }
            }
        }
        Ok(self.push(
            vec![len, c_out],
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                pad_left,
            },
        ))
    }

    /// Column-wise maximum over rows: `[n, d] -> [d]`, or `[n] -> [1]`.
    /// Ties go to the lowest row index.
    pub fn max_axis0(&mut self, a: Var) -> Result<Var> {
        let (n, d) = match *self.shape(a) {
            [n] => (n, 1),
            [n, d] => (n, d),
            ref s => {
                return Err(TensorError::InvalidShape {
                    kernel: "max_axis0",
                    shape: s.to_vec(),
                })
            }
        };
        if n == 0 {
            return Err(TensorError::InvalidShape {
                kernel: "max_axis0",
                shape: self.shape(a).to_vec(),
            });
        }
        let x = self.value(a).data();
        let mut winners = vec![0usize; d];
        let mut out = x[..d].to_vec();
        for r in 1..n {
            for c in 0..d {
                let v = x[r * d + c];
                if v > out[c] {
                    out[c] = v;
                    winners[c] = r;
                }
            }
        }
        Ok(self.push(vec![d], out, Op::MaxAxis0 { input: a, winners }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a))
    }

    /// Softmax over a nonempty vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 1 || shape[0] == 0 {
            return Err(TensorError::InvalidShape {
                kernel: "softmax",
                shape,
            });
        }
        let x = self.value(a).data();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = exps.into_iter().map(|e| e / total).collect();
        Ok(self.push(shape, out, Op::Softmax(a)))
    }

    /// Concatenation along the last axis. Inputs are all vectors, or all
    /// matrices with the same row count.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(TensorError::InvalidShape {
                kernel: "concat",
                shape: vec![],
            });
        };
        let lead = self.shape(first).len();
        let rows = match lead {
            1 => 1,
            2 => self.shape(first)[0],
            _ => {
                return Err(TensorError::InvalidShape {
                    kernel: "concat",
                    shape: self.shape(first).to_vec(),
                })
            }
        };
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let ok = s.len() == lead && (lead == 1 || s[0] == rows);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    kernel: "concat",
                    left: self.shape(first).to_vec(),
                    right: s.to_vec(),
                });
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in inputs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let shape = if lead == 1 {
            vec![total]
        } else {
            vec![rows, total]
        };
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                widths,
            },
        ))
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(TensorError::InvalidShape {
                kernel: "stack",
                shape: vec![],
            });
        };
        let d = match *self.shape(first) {
            [d] => d,
            ref s => {
                return Err(TensorError::InvalidShape {
                    kernel: "stack",
                    shape: s.to_vec(),
                })
            }
        };
        let mut out = Vec::with_capacity(rows.len() * d);
        for &v in rows {
            if self.shape(v) != [d] {
                return Err(TensorError::ShapeMismatch {
                    kernel: "stack",
                    left: vec![d],
                    right: self.shape(v).to_vec(),
                });
            }
            out.extend_from_slice(self.value(v).data());
        }
        Ok(self.push(vec![rows.len(), d], out, Op::Stack(rows.to_vec())))
    }

    fn zip(
        &mut self,
        kernel: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(kernel, a, b)?;
        let shape = self.shape(a).to_vec();
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(shape, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a one-element tensor to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                kernel: "add_scalar",
                left: self.shape(a).to_vec(),
                right: self.shape(s).to_vec(),
            });
        }
        let sv = self.value(s).data()[0];
        let shape = self.shape(a).to_vec();
        let out = self.value(a).data().iter().map(|&x| x + sv).collect();
        Ok(self.push(shape, out, Op::AddScalar(a, s)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    /// Multiplies row `n` of `m: [n, d]` by `a[n]`.
    pub fn row_scale(&mut self, m: Var, a: Var) -> Result<Var> {
        let (n, d) = self.dims2("row_scale", m)?;
        if self.shape(a) != [n] {
            return Err(TensorError::ShapeMismatch {
                kernel: "row_scale",
                left: vec![n, d],
                right: self.shape(a).to_vec(),
            });
        }
        let x = self.value(m).data();
        let s = self.value(a).data();
        let out = (0..n * d).map(|i| x[i] * s[i / d]).collect();
        Ok(self.push(vec![n, d], out, Op::RowScale(m, a)))
    }

    /// Embedding-row lookup: `table: [v, d]` -> `[indices.len(), d]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (v, d) = self.dims2("gather", table)?;
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(TensorError::IndexOutOfRange {
                    kernel: "gather",
                    index: i,
                    bound: v,
                });
            }
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            vec![indices.len(), d],
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = match *self.shape(a) {
            [n] => n,
            ref s => {
                return Err(TensorError::InvalidShape {
                    kernel: "slice",
                    shape: s.to_vec(),
                })
            }
        };
        if start + len > n || len == 0 {
            return Err(TensorError::IndexOutOfRange {
                kernel: "slice",
                index: start + len,
                bound: n,
            });
        }
        let out = self.value(a).data()[start..start + len].to_vec();
        Ok(self.push(vec![len], out, Op::Slice { input: a, start }))
    }

    /// Row sums: `[n, d] -> [n]`.
    pub fn sum_axis1(&mut self, a: Var) -> Result<Var> {
        let (n, d) = self.dims2("sum_axis1", a)?;
        let x = self.value(a).data();
        let out = (0..n).map(|r| x[r * d..(r + 1) * d].iter().sum()).collect();
        Ok(self.push(vec![n], out, Op::SumAxis1(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a))
    }

    pub fn l1_norm(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x.abs()).sum();
        self.push(vec![1], vec![s], Op::L1Norm(a))
    }

    /// Dot product of two equal-shape tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mul(a, b)?;
        Ok(self.sum(m))
    }

    /// Summed binary cross entropy of `sigmoid(logits)` against 0/1 labels,
    /// with probabilities clamped to `[1e-12, 1 - 1e-12]` in the value.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        if self.shape(logits) != [labels.len()] {
            return Err(TensorError::ShapeMismatch {
                kernel: "bce_with_logits",
                left: self.shape(logits).to_vec(),
                right: vec![labels.len()],
            });
        }
        let floor = BCE_EPS.ln();
        let loss = self
            .value(logits)
            .data()
            .iter()
            .zip(labels)
            .map(|(&o, &y)| -(y * log_sigmoid(o).max(floor) + (1.0 - y) * log_sigmoid(-o).max(floor)))
            .sum();
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar root. Every leaf created with
    /// `requires_grad` receives a gradient, zero if it did not participate.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        if self.value(root).numel() != 1 {
            return Err(TensorError::NonScalarRoot(self.shape(root).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();

        for i in (0..=root.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(i, &gout, &mut grads, &mut leaf_grads);
        }

        for (i, g) in leaf_grads {
            self.nodes[i].grad = Some(g);
        }
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.value.numel()]);
            }
        }
        self.consumed = true;
        Ok(())
    }

    fn backward_node(
        &self,
        i: usize,
        gout: &[f64],
        grads: &mut [Option<Vec<f64>>],
        leaf_grads: &mut Vec<(usize, Vec<f64>)>,
    ) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let numel = |v: Var| nodes[v.0].value.numel();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; numel(v)]);
            f(slot);
        };
        let out = nodes[i].value.data();

        match &nodes[i].op {
            Op::Leaf => leaf_grads.push((i, gout.to_vec())),
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..n {
                                s += gout[r * n + c] * bv[p * n + c];
                            }
                            ga[r * k + p] += s;
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..m {
                        for p in 0..k {
                            let x = av[r * k + p];
                            for c in 0..n {
                                gb[p * n + c] += x * gout[r * n + c];
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                acc(*a, &mut |ga| {
                    for p in 0..r {
                        for q in 0..c {
                            ga[p * c + q] += gout[q * r + p];
                        }
                    }
                });
            }
            Op::Reshape(a) => acc(*a, &mut |ga| add_into(ga, gout)),
            Op::Conv1d {
                input,
                weight,
                bias,
                pad_left,
            } => {
                let (len, c_in) = (
                    nodes[input.0].value.shape()[0],
                    nodes[input.0].value.shape()[1],
                );
                let ws = nodes[weight.0].value.shape();
                let (width, c_out) = (ws[0], ws[2]);
                let (x, w) = (val(*input), val(*weight));
                let pad = *pad_left;
                acc(*input, &mut |gx| {
                    for t in 0..len {
                        let go = &gout[t * c_out..(t + 1) * c_out];
                        for j in 0..width {
                            let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                                continue;
                            };
                            let wj = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
                            for c in 0..c_in {
                                let wc = &wj[c * c_out..(c + 1) * c_out];
                                gx[src * c_in + c] +=
                                    wc.iter().zip(go).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                });
                acc(*weight, &mut |gw| {
                    for t in 0..len {
                        let go = &gout[t * c_out..(t + 1) * c_out];
                        for j in 0..width {
                            let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                                continue;
                            };
                            for c in 0..c_in {
                                let xv = x[src * c_in + c];
                                if xv == 0.0 {
                                    continue;
                                }
                                let base = (j * c_in + c) * c_out;
                                for (g, &o) in gw[base..base + c_out].iter_mut().zip(go) {
                                    *g += xv * o;
                                }
                            }
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for t in 0..len {
                        add_into(gb, &gout[t * c_out..(t + 1) * c_out]);
                    }
                });
            }
            Op::MaxAxis0 { input, winners } => {
                let d = winners.len();
                acc(*input, &mut |ga| {
                    for (c, &r) in winners.iter().enumerate() {
                        ga[r * d + c] += gout[c];
                    }
                });
            }
            Op::Relu(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for ((g, &xv), &go) in ga.iter_mut().zip(x).zip(gout) {
                        if xv > 0.0 {
                            *g += go;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for ((g, &y), &go) in ga.iter_mut().zip(out).zip(gout) {
                    *g += go * y * (1.0 - y);
                }
            }),
            Op::Abs(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for ((g, &xv), &go) in ga.iter_mut().zip(x).zip(gout) {
                        *g += go * sign(xv);
                    }
                });
            }
            Op::Softmax(a) => {
                let inner: f64 = out.iter().zip(gout).map(|(y, g)| y * g).sum();
                acc(*a, &mut |ga| {
                    for ((g, &y), &go) in ga.iter_mut().zip(out).zip(gout) {
                        *g += y * (go - inner);
                    }
                });
            }
            Op::Concat { inputs, widths } => {
                let total: usize = widths.iter().sum();
                let rows = gout.len() / total;
                let mut offset = 0;
                for (&v, &w) in inputs.iter().zip(widths) {
                    acc(v, &mut |gv| {
                        for r in 0..rows {
                            let src = &gout[r * total + offset..r * total + offset + w];
                            add_into(&mut gv[r * w..(r + 1) * w], src);
                        }
                    });
                    offset += w;
                }
            }
            Op::Stack(rows) => {
                let d = gout.len() / rows.len();
                for (r, &v) in rows.iter().enumerate() {
                    acc(v, &mut |gv| add_into(gv, &gout[r * d..(r + 1) * d]));
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, gout));
                acc(*b, &mut |gb| add_into(gb, gout));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, gout));
                acc(*b, &mut |gb| {
                    for (g, &go) in gb.iter_mut().zip(gout) {
                        *g -= go;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((g, &y), &go) in ga.iter_mut().zip(bv).zip(gout) {
                        *g += go * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((g, &x), &go) in gb.iter_mut().zip(av).zip(gout) {
                        *g += go * x;
                    }
                });
            }
            Op::AddScalar(a, s) => {
                acc(*a, &mut |ga| add_into(ga, gout));
                acc(*s, &mut |gs| gs[0] += gout.iter().sum::<f64>());
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| {
                for (g, &go) in ga.iter_mut().zip(gout) {
                    *g += c * go;
                }
            }),
            Op::RowScale(m, a) => {
                let d = nodes[m.0].value.shape()[1];
                let (mv, av) = (val(*m), val(*a));
                acc(*m, &mut |gm| {
                    for (idx, (g, &go)) in gm.iter_mut().zip(gout).enumerate() {
                        *g += go * av[idx / d];
                    }
                });
                acc(*a, &mut |ga| {
                    for (idx, (&go, &x)) in gout.iter().zip(mv).enumerate() {
                        ga[idx / d] += go * x;
                    }
                });
            }
            Op::Gather { table, indices } => {
                let d = nodes[table.0].value.shape()[1];
                acc(*table, &mut |gt| {
                    for (r, &row) in indices.iter().enumerate() {
                        add_into(&mut gt[row * d..(row + 1) * d], &gout[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::Slice { input, start } => acc(*input, &mut |ga| {
                add_into(&mut ga[*start..*start + gout.len()], gout);
            }),
            Op::SumAxis1(a) => {
                let d = nodes[a.0].value.shape()[1];
                acc(*a, &mut |ga| {
                    for (idx, g) in ga.iter_mut().enumerate() {
                        *g += gout[idx / d];
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| {
                for g in ga.iter_mut() {
                    *g += gout[0];
                }
            }),
            Op::L1Norm(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for (g, &xv) in ga.iter_mut().zip(x) {
                        *g += gout[0] * sign(xv);
                    }
                });
            }
            Op::BceWithLogits { logits, labels } => {
                let o = val(*logits);
                acc(*logits, &mut |gl| {
                    for ((g, &ov), &y) in gl.iter_mut().zip(o).zip(labels) {
                        *g += gout[0] * (sigmoid(ov) - y);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let row = &mut out[r * n..(r + 1) * n];
        for p in 0..k {
            let x = a[r * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
    out
}
