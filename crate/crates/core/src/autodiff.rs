//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Nodes are appended to a tape with eagerly computed forward values, so
//! insertion order is a topological order and the backward pass is a single
//! reverse sweep. Non-differentiable forward ops (floor, hard threshold)
//! carry straight-through surrogate gradients; custom elementwise surrogate
//! rules can be attached for anything else.
//!
//! Gradient conventions at kinks: ReLU and positive-part use subgradient 0 at
//! an input of exactly 0.

use crate::error::{CoreError, Result};
use crate::tensor::TensorValue;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// An exact (possibly non-differentiable) forward function paired with the
/// elementwise factor used in its place during backpropagation.
pub struct SurrogateRule {
    /// Exact forward map; must preserve shape.
    pub forward: Box<dyn Fn(&TensorValue) -> TensorValue>,
    /// Elementwise backward factor as a function of (input, forward output).
    pub backward: Box<dyn Fn(&TensorValue, &TensorValue) -> TensorValue>,
}

impl SurrogateRule {
    /// Exact forward with identity backward (the plain straight-through rule).
    pub fn straight_through(forward: impl Fn(&TensorValue) -> TensorValue + 'static) -> Self {
        Self {
            forward: Box::new(forward),
            backward: Box::new(|input, _| TensorValue::full(input.shape(), 1.0)),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Sin(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// L1 norm of the positive part: sum of max(0, x).
    PosPartL1(NodeId),
    SumAxis1(NodeId),
    MeanAxis0(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize, usize),
    /// Elementwise floor; backward is the identity (straight-through).
    Floor(NodeId),
    /// Indicator x > 0.5 as {0,1}; backward is the identity (straight-through).
    GtHalf(NodeId),
    Surrogate(NodeId, usize),
}

struct Node {
    op: Op,
    value: TensorValue,
}

/// Gradients of a scalar root with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<TensorValue>>,
}

impl Gradients {
    /// Gradient with respect to the given node, zero-filled if the node does
    /// not influence the root.
    pub fn wrt(&self, id: NodeId, tape: &Tape) -> TensorValue {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => TensorValue::zeros(tape.value(id).shape()),
        }
    }
}

/// The computation tape. Values are computed eagerly at node construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    rules: Vec<SurrogateRule>,
    has_surrogate: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &TensorValue {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True if any node so far uses a straight-through or custom surrogate.
    pub fn has_surrogate_ops(&self) -> bool {
        self.has_surrogate
    }

    fn push(&mut self, op: Op, value: TensorValue) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn input(&mut self, value: TensorValue) -> NodeId {
        self.push(Op::Input, value)
    }

    /// A non-differentiable leaf (no gradient is requested for it).
    pub fn constant(&mut self, value: TensorValue) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.broadcast_zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.broadcast_zip("subtract", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.broadcast_zip("multiply", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.broadcast_zip("divide", a, b, |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), v))
    }

    /// (p x q) . (q x r) -> (p x r).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ash, bsh) = (av.shape(), bv.shape());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let (p, q, r) = (ash[0], ash[1], bsh[1]);
        let mut out = vec![0.0; p * r];
        mat_mul_into(av.data(), bv.data(), p, q, r, &mut out);
        let v = TensorValue::new_allow_non_finite(out, vec![p, r])?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// (p x q) . (q) -> (p).
    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        let (av, xv) = (self.value(a), self.value(x));
        let (ash, xsh) = (av.shape(), xv.shape());
        if ash.len() != 2 || xsh.len() != 1 || ash[1] != xsh[0] {
            return Err(CoreError::ShapeMismatch {
                op: "matvec",
                lhs: ash.to_vec(),
                rhs: xsh.to_vec(),
            });
        }
        let (p, q) = (ash[0], ash[1]);
        let mut out = vec![0.0; p];
        for i in 0..p {
            let row = &av.data()[i * q..(i + 1) * q];
            out[i] = row.iter().zip(xv.data()).map(|(r, v)| r * v).sum();
        }
        let v = TensorValue::new_allow_non_finite(out, vec![p])?;
        Ok(self.push(Op::MatVec(a, x), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        let sh = av.shape();
        if sh.len() != 2 {
            return Err(CoreError::BadOperand {
                op: "transpose",
                expected: "a rank-2 tensor",
                got: sh.to_vec(),
            });
        }
        let (p, q) = (sh[0], sh[1]);
        let mut out = vec![0.0; p * q];
        for i in 0..p {
            for j in 0..q {
                out[j * p + i] = av.data()[i * q + j];
            }
        }
        let v = TensorValue::new_allow_non_finite(out, vec![q, p])?;
        Ok(self.push(Op::Transpose(a), v))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sin);
        self.push(Op::Sin(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = TensorValue::scalar(self.value(a).iter().sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let v = TensorValue::scalar(self.value(a).iter().sum::<f64>() / n);
        self.push(Op::Mean(a), v)
    }

    /// Sum of positive parts, `sum_j max(0, x_j)` — the violation norm.
    pub fn pos_part_l1(&mut self, a: NodeId) -> NodeId {
        let v = TensorValue::scalar(self.value(a).iter().map(|x| x.max(0.0)).sum());
        self.push(Op::PosPartL1(a), v)
    }

    /// Row sums of a (B x m) matrix as a (B x 1) column.
    pub fn sum_axis1(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        let sh = av.shape();
        if sh.len() != 2 {
            return Err(CoreError::BadOperand {
                op: "sum_axis1",
                expected: "a rank-2 tensor",
                got: sh.to_vec(),
            });
        }
        let (rows, cols) = (sh[0], sh[1]);
        let out: Vec<f64> = (0..rows)
            .map(|i| av.data()[i * cols..(i + 1) * cols].iter().sum())
            .collect();
        let v = TensorValue::new_allow_non_finite(out, vec![rows, 1])?;
        Ok(self.push(Op::SumAxis1(a), v))
    }

    /// Column means of a (B x m) matrix as a length-m vector.
    pub fn mean_axis0(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        let sh = av.shape();
        if sh.len() != 2 {
            return Err(CoreError::BadOperand {
                op: "mean_axis0",
                expected: "a rank-2 tensor",
                got: sh.to_vec(),
            });
        }
        let (rows, cols) = (sh[0], sh[1]);
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j] += av.data()[i * cols + j];
            }
        }
        for v in &mut out {
            *v /= rows as f64;
        }
        let v = TensorValue::new_allow_non_finite(out, vec![cols])?;
        Ok(self.push(Op::MeanAxis0(a), v))
    }

    /// Horizontal concatenation of (B x p) and (B x q) into (B x p+q).
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ash, bsh) = (av.shape(), bv.shape());
        if ash.len() != 2 || bsh.len() != 2 || ash[0] != bsh[0] {
            return Err(CoreError::ShapeMismatch {
                op: "concat_cols",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let (rows, p, q) = (ash[0], ash[1], bsh[1]);
        let mut out = Vec::with_capacity(rows * (p + q));
        for i in 0..rows {
            out.extend_from_slice(&av.data()[i * p..(i + 1) * p]);
            out.extend_from_slice(&bv.data()[i * q..(i + 1) * q]);
        }
        let v = TensorValue::new_allow_non_finite(out, vec![rows, p + q])?;
        Ok(self.push(Op::ConcatCols(a, b), v))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let av = self.value(a);
        let sh = av.shape();
        if sh.len() != 2 || end > sh[1] || start > end {
            return Err(CoreError::BadOperand {
                op: "slice_cols",
                expected: "a rank-2 tensor with a valid column range",
                got: sh.to_vec(),
            });
        }
        let (rows, cols) = (sh[0], sh[1]);
        let mut out = Vec::with_capacity(rows * (end - start));
        for i in 0..rows {
            out.extend_from_slice(&av.data()[i * cols + start..i * cols + end]);
        }
        let v = TensorValue::new_allow_non_finite(out, vec![rows, end - start])?;
        Ok(self.push(Op::SliceCols(a, start, end), v))
    }

    /// Elementwise floor with an identity (straight-through) backward.
    pub fn floor_ste(&mut self, a: NodeId) -> NodeId {
        self.has_surrogate = true;
        let v = self.value(a).map(f64::floor);
        self.push(Op::Floor(a), v)
    }

    /// Indicator of x > 0.5 (strict, so exact halves go to 0) with an
    /// identity (straight-through) backward.
    pub fn gt_half_ste(&mut self, a: NodeId) -> NodeId {
        self.has_surrogate = true;
        let v = self.value(a).map(|x| if x > 0.5 { 1.0 } else { 0.0 });
        self.push(Op::GtHalf(a), v)
    }

    /// Applies a custom surrogate rule: exact forward, substituted elementwise
    /// Jacobian in the backward pass.
    pub fn attach_surrogate(&mut self, a: NodeId, rule: SurrogateRule) -> Result<NodeId> {
        let v = (rule.forward)(self.value(a));
        if v.shape() != self.value(a).shape() {
            return Err(CoreError::ShapeMismatch {
                op: "attach_surrogate(forward)",
                lhs: self.value(a).shape().to_vec(),
                rhs: v.shape().to_vec(),
            });
        }
        self.has_surrogate = true;
        self.rules.push(rule);
        let idx = self.rules.len() - 1;
        Ok(self.push(Op::Surrogate(a, idx), v))
    }

    /// Reverse sweep from a scalar root; each node is visited exactly once.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(CoreError::NotScalar {
                shape: root_val.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<TensorValue>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(TensorValue::full(root_val.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let adj = match grads[idx].take() {
                Some(a) => a,
                None => continue,
            };
            self.propagate(idx, &adj, &mut grads)?;
            grads[idx] = Some(adj);
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        idx: usize,
        adj: &TensorValue,
        grads: &mut [Option<TensorValue>],
    ) -> Result<()> {
        let accumulate = |grads: &mut [Option<TensorValue>], id: NodeId, g: TensorValue| {
            match &mut grads[id.0] {
                Some(existing) => {
                    for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                        *e += v;
                    }
                }
                slot @ None => *slot = Some(g),
            }
        };

        match &self.nodes[idx].op {
            Op::Input | Op::Constant => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, self.reduce_to(*a, adj.clone()));
                accumulate(grads, *b, self.reduce_to(*b, adj.clone()));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, self.reduce_to(*a, adj.clone()));
                accumulate(grads, *b, self.reduce_to(*b, adj.map(|x| -x)));
            }
            Op::Mul(a, b) => {
                let ga = self.zip_with_broadcast(*a, *b, adj, |x, y| x * y, false);
                let gb = self.zip_with_broadcast(*a, *b, adj, |x, y| x * y, true);
                accumulate(grads, *a, self.reduce_to(*a, ga));
                accumulate(grads, *b, self.reduce_to(*b, gb));
            }
            Op::Div(a, b) => {
                let ga = self.zip_with_broadcast(*a, *b, adj, |x, y| x / y, false);
                let gb_full = {
                    let av = self.value(*a);
                    let bb = broadcast_like(self.value(*b), av.shape());
                    let mut out = adj.clone();
                    for ((o, &x), &bx) in out.data_mut().iter_mut().zip(av.data()).zip(bb.data()) {
                        *o = -*o * x / (bx * bx);
                    }
                    out
                };
                accumulate(grads, *a, self.reduce_to(*a, ga));
                accumulate(grads, *b, self.reduce_to(*b, gb_full));
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (p, q, r) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                // dA = adj . B^T
                let mut ga = vec![0.0; p * q];
                for i in 0..p {
                    for k in 0..r {
                        let g = adj.data()[i * r + k];
                        for j in 0..q {
                            ga[i * q + j] += g * bv.data()[j * r + k];
                        }
                    }
                }
                // dB = A^T . adj
                let mut gb = vec![0.0; q * r];
                for i in 0..p {
                    for j in 0..q {
                        let aij = av.data()[i * q + j];
                        for k in 0..r {
                            gb[j * r + k] += aij * adj.data()[i * r + k];
                        }
                    }
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, vec![p, q]).unwrap(),
                );
                accumulate(
                    grads,
                    *b,
                    TensorValue::new_allow_non_finite(gb, vec![q, r]).unwrap(),
                );
            }
            Op::MatVec(a, x) => {
                let (av, xv) = (self.value(*a), self.value(*x));
                let (p, q) = (av.shape()[0], av.shape()[1]);
                let mut ga = vec![0.0; p * q];
                let mut gx = vec![0.0; q];
                for i in 0..p {
                    let g = adj.data()[i];
                    for j in 0..q {
                        ga[i * q + j] = g * xv.data()[j];
                        gx[j] += g * av.data()[i * q + j];
                    }
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, vec![p, q]).unwrap(),
                );
                accumulate(
                    grads,
                    *x,
                    TensorValue::new_allow_non_finite(gx, vec![q]).unwrap(),
                );
            }
            Op::Transpose(a) => {
                let sh = self.value(*a).shape();
                let (p, q) = (sh[0], sh[1]);
                let mut ga = vec![0.0; p * q];
                for i in 0..q {
                    for j in 0..p {
                        ga[j * q + i] = adj.data()[i * p + j];
                    }
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, vec![p, q]).unwrap(),
                );
            }
            Op::Relu(a) => {
                let g = elementwise_chain(adj, self.value(*a), |x| if x > 0.0 { 1.0 } else { 0.0 });
                accumulate(grads, *a, g);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                let g = elementwise_chain(adj, y, |s| s * (1.0 - s));
                accumulate(grads, *a, g);
            }
            Op::Sin(a) => {
                let g = elementwise_chain(adj, self.value(*a), f64::cos);
                accumulate(grads, *a, g);
            }
            Op::Square(a) => {
                let g = elementwise_chain(adj, self.value(*a), |x| 2.0 * x);
                accumulate(grads, *a, g);
            }
            Op::Sqrt(a) => {
                let y = &self.nodes[idx].value;
                let g = elementwise_chain(adj, y, |s| 0.5 / s);
                accumulate(grads, *a, g);
            }
            Op::Scale(a, c) => {
                accumulate(grads, *a, adj.map(|x| c * x));
            }
            Op::AddConst(a) => {
                accumulate(grads, *a, adj.clone());
            }
            Op::Sum(a) => {
                let g = adj.scalar_value().unwrap();
                accumulate(grads, *a, TensorValue::full(self.value(*a).shape(), g));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let g = adj.scalar_value().unwrap() / n;
                accumulate(grads, *a, TensorValue::full(self.value(*a).shape(), g));
            }
            Op::PosPartL1(a) => {
                let g = adj.scalar_value().unwrap();
                let grad = self.value(*a).map(|x| if x > 0.0 { g } else { 0.0 });
                accumulate(grads, *a, grad);
            }
            Op::SumAxis1(a) => {
                let sh = self.value(*a).shape();
                let (rows, cols) = (sh[0], sh[1]);
                let mut ga = vec![0.0; rows * cols];
                for i in 0..rows {
                    let g = adj.data()[i];
                    for j in 0..cols {
                        ga[i * cols + j] = g;
                    }
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, sh.to_vec()).unwrap(),
                );
            }
            Op::MeanAxis0(a) => {
                let sh = self.value(*a).shape();
                let (rows, cols) = (sh[0], sh[1]);
                let mut ga = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        ga[i * cols + j] = adj.data()[j] / rows as f64;
                    }
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, sh.to_vec()).unwrap(),
                );
            }
            Op::ConcatCols(a, b) => {
                let (p, q) = (self.value(*a).shape()[1], self.value(*b).shape()[1]);
                let rows = self.value(*a).shape()[0];
                let mut ga = vec![0.0; rows * p];
                let mut gb = vec![0.0; rows * q];
                for i in 0..rows {
                    let row = &adj.data()[i * (p + q)..(i + 1) * (p + q)];
                    ga[i * p..(i + 1) * p].copy_from_slice(&row[..p]);
                    gb[i * q..(i + 1) * q].copy_from_slice(&row[p..]);
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, vec![rows, p]).unwrap(),
                );
                accumulate(
                    grads,
                    *b,
                    TensorValue::new_allow_non_finite(gb, vec![rows, q]).unwrap(),
                );
            }
            Op::SliceCols(a, start, end) => {
                let sh = self.value(*a).shape();
                let (rows, cols, width) = (sh[0], sh[1], end - start);
                let mut ga = vec![0.0; rows * cols];
                for i in 0..rows {
                    ga[i * cols + start..i * cols + end]
                        .copy_from_slice(&adj.data()[i * width..(i + 1) * width]);
                }
                accumulate(
                    grads,
                    *a,
                    TensorValue::new_allow_non_finite(ga, sh.to_vec()).unwrap(),
                );
            }
            Op::Floor(a) | Op::GtHalf(a) => {
                // Straight-through: identity backward.
                accumulate(grads, *a, adj.clone());
            }
            Op::Surrogate(a, rule_idx) => {
                let factor = (self.rules[*rule_idx].backward)(self.value(*a), &self.nodes[idx].value);
                if factor.shape() != self.value(*a).shape() {
                    return Err(CoreError::ShapeMismatch {
                        op: "surrogate backward",
                        lhs: self.value(*a).shape().to_vec(),
                        rhs: factor.shape().to_vec(),
                    });
                }
                let mut g = adj.clone();
                for (gv, f) in g.data_mut().iter_mut().zip(factor.data()) {
                    *gv *= f;
                }
                accumulate(grads, *a, g);
            }
        }
        Ok(())
    }

    fn broadcast_zip(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<TensorValue> {
        let (av, bv) = (self.value(a), self.value(b));
        match broadcast_kind(av.shape(), bv.shape()) {
            Some(_) => {
                let bb = broadcast_like(bv, av.shape());
                let data: Vec<f64> = av
                    .data()
                    .iter()
                    .zip(bb.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect();
                TensorValue::new_allow_non_finite(data, av.shape().to_vec())
            }
            None => Err(CoreError::ShapeMismatch {
                op,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            }),
        }
    }

    /// Computes adj (elementwise-combined with the broadcast counterpart) in
    /// the full shape of operand `a`.
    fn zip_with_broadcast(
        &self,
        a: NodeId,
        b: NodeId,
        adj: &TensorValue,
        f: impl Fn(f64, f64) -> f64,
        use_a_side: bool,
    ) -> TensorValue {
        let av = self.value(a);
        let other = if use_a_side {
            av.clone()
        } else {
            broadcast_like(self.value(b), av.shape())
        };
        let data: Vec<f64> = adj
            .data()
            .iter()
            .zip(other.data())
            .map(|(&g, &o)| f(g, o))
            .collect();
        TensorValue::new_allow_non_finite(data, av.shape().to_vec()).unwrap()
    }

    /// Reduces a full-shape gradient down to the (possibly broadcast) shape of
    /// the target operand by summing over the broadcast axes.
    fn reduce_to(&self, target: NodeId, grad: TensorValue) -> TensorValue {
        let tsh = self.value(target).shape().to_vec();
        if grad.shape() == tsh.as_slice() {
            return grad;
        }
        match broadcast_kind(grad.shape(), &tsh) {
            Some(Broadcast::Same) => grad,
            Some(Broadcast::Scalar) => TensorValue::scalar(grad.iter().sum()),
            Some(Broadcast::RowVector) => {
                let (rows, cols) = (grad.shape()[0], grad.shape()[1]);
                let mut out = vec![0.0; cols];
                for i in 0..rows {
                    for j in 0..cols {
                        out[j] += grad.data()[i * cols + j];
                    }
                }
                TensorValue::new_allow_non_finite(out, tsh).unwrap()
            }
            Some(Broadcast::ColVector) => {
                let (rows, cols) = (grad.shape()[0], grad.shape()[1]);
                let out: Vec<f64> = (0..rows)
                    .map(|i| grad.data()[i * cols..(i + 1) * cols].iter().sum())
                    .collect();
                TensorValue::new_allow_non_finite(out, tsh).unwrap()
            }
            None => unreachable!("forward pass validated broadcast compatibility"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Broadcast {
    Same,
    /// rhs is a length-m vector broadcast across the rows of a (B x m) lhs.
    RowVector,
    /// rhs is a (B x 1) column broadcast across the columns of a (B x m) lhs.
    ColVector,
    /// rhs is a scalar.
    Scalar,
}

fn broadcast_kind(lhs: &[usize], rhs: &[usize]) -> Option<Broadcast> {
    if lhs == rhs {
        return Some(Broadcast::Same);
    }
    if rhs.is_empty() || rhs == [1] {
        return Some(Broadcast::Scalar);
    }
    if lhs.len() == 2 {
        if rhs.len() == 1 && rhs[0] == lhs[1] {
            return Some(Broadcast::RowVector);
        }
        if rhs.len() == 2 && rhs[0] == lhs[0] && rhs[1] == 1 && lhs[1] != 1 {
            return Some(Broadcast::ColVector);
        }
    }
    None
}

/// Materializes `src` broadcast to `shape` (per [`broadcast_kind`]).
fn broadcast_like(src: &TensorValue, shape: &[usize]) -> TensorValue {
    match broadcast_kind(shape, src.shape()) {
        Some(Broadcast::Same) => src.clone(),
        Some(Broadcast::Scalar) => TensorValue::full(shape, src.data()[0]),
        Some(Broadcast::RowVector) => {
            let (rows, cols) = (shape[0], shape[1]);
            let mut out = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                out.extend_from_slice(src.data());
            }
            TensorValue::new_allow_non_finite(out, shape.to_vec()).unwrap()
        }
        Some(Broadcast::ColVector) => {
            let (rows, cols) = (shape[0], shape[1]);
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                out.extend(std::iter::repeat(src.data()[i]).take(cols));
            }
            TensorValue::new_allow_non_finite(out, shape.to_vec()).unwrap()
        }
        None => unreachable!("caller validated broadcast compatibility"),
    }
}

fn elementwise_chain(
    adj: &TensorValue,
    basis: &TensorValue,
    deriv: impl Fn(f64) -> f64,
) -> TensorValue {
    let data: Vec<f64> = adj
        .data()
        .iter()
        .zip(basis.data())
        .map(|(&g, &x)| g * deriv(x))
        .collect();
    TensorValue::new_allow_non_finite(data, adj.shape().to_vec()).unwrap()
}

fn mat_mul_into(a: &[f64], b: &[f64], p: usize, q: usize, r: usize, out: &mut [f64]) {
    for i in 0..p {
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            let orow = &mut out[i * r..(i + 1) * r];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Compares the autodiff gradient of a scalar-valued graph against central
/// finite differences with step `h`, returning the maximum relative error
/// over all input components. Refuses graphs containing surrogate ops, whose
/// backward pass disagrees with finite differences by construction.
pub fn grad_check<F>(build: F, inputs: &[TensorValue], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |points: &[TensorValue]| -> Result<(Tape, Vec<NodeId>, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = points.iter().map(|t| tape.input(t.clone())).collect();
        let root = build(&mut tape, &ids)?;
        Ok((tape, ids, root))
    };

    let (tape, ids, root) = eval(inputs)?;
    if tape.has_surrogate_ops() {
        return Err(CoreError::SurrogateOnPath);
    }
    let grads = tape.backward(root)?;

    let mut max_rel = 0.0f64;
    let mut points = inputs.to_vec();
    for (input_idx, id) in ids.iter().enumerate() {
        let analytic = grads.wrt(*id, &tape);
        for comp in 0..inputs[input_idx].len() {
            let orig = points[input_idx].data()[comp];
            points[input_idx].data_mut()[comp] = orig + h;
            let (t_plus, _, r_plus) = eval(&points)?;
            let f_plus = t_plus.value(r_plus).scalar_value()?;
            points[input_idx].data_mut()[comp] = orig - h;
            let (t_minus, _, r_minus) = eval(&points)?;
            let f_minus = t_minus.value(r_minus).scalar_value()?;
            points[input_idx].data_mut()[comp] = orig;

            let fd = (f_plus - f_minus) / (2.0 * h);
            let ad = analytic.data()[comp];
            let rel = (ad - fd).abs() / (fd.abs() + 1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
