//! Define-by-run trace of tensor operations.
//!
//! Every primitive records a [`TraceNode`] holding its op and primal value.
//! Derivative rules are themselves written with traced ops, so the adjoints
//! returned by [`Tape::grad`] and the tangents returned by [`Tape::jvp`] are
//! ordinary nodes that can be differentiated once more. Each node carries a
//! derivative order; differentiating anything that already has order 2 is
//! rejected.

use std::cell::{Cell, Ref, RefCell};

use crate::error::AutodiffError;
use crate::tensor::Tensor;

/// Highest derivative order a node may reach.
pub const MAX_ORDER: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Recip(usize),
    AddRow(usize, usize),
    Sum(usize),
    BroadcastScalar(usize, Vec<usize>),
    SumRows(usize),
    SumCols(usize),
    BroadcastRows(usize, usize),
    BroadcastCols(usize, usize),
    SliceCols(usize, usize, usize),
    PadCols(usize, usize, usize),
    SliceFlat(usize, usize, usize),
    PadFlat(usize, usize, usize),
    Reshape(usize, Vec<usize>),
    RepeatRows(usize, usize),
    SumRowGroups(usize, usize),
    LogSoftmax(usize),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<usize> {
        use Op::*;
        match *self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | AddRow(a, b) => vec![a, b],
            Neg(a)
            | Scale(a, _)
            | AddScalar(a, _)
            | Transpose(a)
            | Tanh(a)
            | Sigmoid(a)
            | Exp(a)
            | Log(a)
            | Recip(a)
            | Sum(a)
            | BroadcastScalar(a, _)
            | SumRows(a)
            | SumCols(a)
            | BroadcastRows(a, _)
            | BroadcastCols(a, _)
            | SliceCols(a, _, _)
            | PadCols(a, _, _)
            | SliceFlat(a, _, _)
            | PadFlat(a, _, _)
            | Reshape(a, _)
            | RepeatRows(a, _)
            | SumRowGroups(a, _)
            | LogSoftmax(a) => vec![a],
        }
    }

    /// Primal evaluation from parent values. Both recording and replay go
    /// through here, which is what makes replay bit-exact.
    pub(crate) fn eval(&self, value: impl Fn(usize) -> Tensor) -> Tensor {
        use Op::*;
        match self {
            Leaf => unreachable!("leaves carry their own value"),
            Add(a, b) => value(*a).add(&value(*b)),
            Sub(a, b) => value(*a).sub(&value(*b)),
            Mul(a, b) => value(*a).mul(&value(*b)),
            Neg(a) => value(*a).map(|x| -x),
            Scale(a, k) => value(*a).scale(*k),
            AddScalar(a, k) => value(*a).map(|x| x + k),
            MatMul(a, b) => value(*a).matmul(&value(*b)),
            Transpose(a) => value(*a).transpose(),
            Tanh(a) => value(*a).map(f64::tanh),
            Sigmoid(a) => value(*a).map(sigmoid),
            Exp(a) => value(*a).map(f64::exp),
            Log(a) => value(*a).map(f64::ln),
            Recip(a) => value(*a).map(|x| 1.0 / x),
            AddRow(a, b) => value(*a).add_row(&value(*b)),
            Sum(a) => Tensor::scalar(value(*a).sum()),
            BroadcastScalar(a, shape) => Tensor::full(shape, value(*a).item()),
            SumRows(a) => value(*a).sum_rows(),
            SumCols(a) => value(*a).sum_cols(),
            BroadcastRows(a, m) => value(*a).broadcast_rows(*m),
            BroadcastCols(a, n) => value(*a).broadcast_cols(*n),
            SliceCols(a, s, l) => value(*a).slice_cols(*s, *l),
            PadCols(a, s, t) => value(*a).pad_cols(*s, *t),
            SliceFlat(a, s, l) => value(*a).slice_flat(*s, *l),
            PadFlat(a, s, t) => value(*a).pad_flat(*s, *t),
            Reshape(a, shape) => value(*a).reshape(shape),
            RepeatRows(a, k) => value(*a).repeat_rows(*k),
            SumRowGroups(a, k) => value(*a).sum_row_groups(*k),
            LogSoftmax(a) => value(*a).log_softmax(),
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

/// One recorded operation.
#[derive(Clone, Debug)]
pub struct TraceNode {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) order: u8,
}

impl TraceNode {
    /// Indices of the nodes this one was computed from.
    pub fn parents(&self) -> Vec<usize> {
        self.op.parents()
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Derivative order: 0 for primal values, 1 for first derivatives, ...
    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn is_leaf(&self) -> bool {
        self.op == Op::Leaf
    }
}

/// Append-only operation trace. Not `Sync`; build one per thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<TraceNode>>,
    level: Cell<u8>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf (an input or a constant).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let order = self.level.get();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(TraceNode { op: Op::Leaf, value, order });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(x))
    }

    pub fn node(&self, id: usize) -> Ref<'_, TraceNode> {
        Ref::map(self.nodes.borrow(), |n| &n[id])
    }

    pub(crate) fn op(&self, id: usize) -> Op {
        self.nodes.borrow()[id].op.clone()
    }

    fn push(&self, op: Op) -> Var<'_> {
        let (value, order) = {
            let nodes = self.nodes.borrow();
            let parent_order = op.parents().iter().map(|&p| nodes[p].order).max().unwrap_or(0);
            (
                op.eval(|i| nodes[i].value.clone()),
                parent_order.max(self.level.get()),
            )
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(TraceNode { op, value, order });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    /// Recomputes every node from (possibly overridden) leaf values.
    pub fn replay(&self, overrides: &[(Var<'_>, Tensor)]) -> Vec<Tensor> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Tensor> = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            let v = if node.op == Op::Leaf {
                overrides
                    .iter()
                    .find(|(var, _)| var.id == i)
                    .map(|(_, t)| t.clone())
                    .unwrap_or_else(|| node.value.clone())
            } else {
                node.op.eval(|p| values[p].clone())
            };
            values.push(v);
        }
        values
    }

    fn enter_level(&self, order: u8) -> Result<u8, AutodiffError> {
        if order >= MAX_ORDER {
            return Err(AutodiffError::NestingTooDeep(order));
        }
        let saved = self.level.get();
        self.level.set(saved.max(order + 1));
        Ok(saved)
    }

    /// Marks nodes in `0..end` that depend on any of `roots`.
    fn reach_from(&self, roots: &[usize], end: usize) -> Vec<bool> {
        let nodes = self.nodes.borrow();
        let mut reach = vec![false; end];
        for &r in roots {
            if r < end {
                reach[r] = true;
            }
        }
        let start = roots.iter().copied().min().unwrap_or(end);
        for i in start..end {
            if !reach[i] && nodes[i].op.parents().iter().any(|&p| reach[p]) {
                reach[i] = true;
            }
        }
        reach
    }

    /// Reverse-mode gradient of a scalar node with respect to `wrt`.
    ///
    /// The returned adjoints are traced, so a scalar built from them can be
    /// differentiated again (one extra level).
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>, AutodiffError> {
        let (shape, order) = {
            let n = self.node(output.id);
            (n.value.shape().to_vec(), n.order)
        };
        if shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarOutput(shape));
        }
        let saved = self.enter_level(order)?;
        let end = output.id + 1;
        let roots: Vec<usize> = wrt.iter().map(|v| v.id).collect();
        let reach = self.reach_from(&roots, end);

        let mut adj: Vec<Option<Var<'t>>> = vec![None; end];
        adj[output.id] = Some(self.leaf(Tensor::ones(&shape)));
        for i in (0..end).rev() {
            if !reach[i] {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            let op = self.op(i);
            for (p, contrib) in self.vjp(i, &op, g, &reach) {
                adj[p] = Some(match adj[p] {
                    Some(acc) => acc + contrib,
                    None => contrib,
                });
            }
        }
        let out = wrt
            .iter()
            .map(|w| match adj.get(w.id).copied().flatten() {
                Some(g) => g,
                None => self.leaf(Tensor::zeros(w.shape().as_slice())),
            })
            .collect();
        self.level.set(saved);
        Ok(out)
    }

    /// Adjoint contributions of node `i` to its parents that lie on a path
    /// from the differentiation roots.
    fn vjp<'t>(&'t self, i: usize, op: &Op, g: Var<'t>, reach: &[bool]) -> Vec<(usize, Var<'t>)> {
        use Op::*;
        let y = self.var(i);
        let v = |id: usize| self.var(id);
        let mut out = Vec::with_capacity(2);
        let mut put = |p: usize, f: &dyn Fn() -> Var<'t>| {
            if reach[p] {
                out.push((p, f()));
            }
        };
        match *op {
            Leaf => {}
            Add(a, b) => {
                put(a, &|| g);
                put(b, &|| g);
            }
            Sub(a, b) => {
                put(a, &|| g);
                put(b, &|| -g);
            }
            Mul(a, b) => {
                put(a, &|| g * v(b));
                put(b, &|| g * v(a));
            }
            Neg(a) => put(a, &|| -g),
            Scale(a, k) => put(a, &|| g.scale(k)),
            AddScalar(a, _) => put(a, &|| g),
            MatMul(a, b) => {
                put(a, &|| g.matmul(v(b).t()));
                put(b, &|| v(a).t().matmul(g));
            }
            Transpose(a) => put(a, &|| g.t()),
            Tanh(a) => put(a, &|| g * (y * y).one_minus()),
            Sigmoid(a) => put(a, &|| g * y * y.one_minus()),
            Exp(a) => put(a, &|| g * y),
            Log(a) => put(a, &|| g * v(a).recip()),
            Recip(a) => put(a, &|| -(g * y * y)),
            AddRow(a, b) => {
                put(a, &|| g);
                put(b, &|| g.sum_rows());
            }
            Sum(a) => put(a, &|| g.broadcast_scalar(&v(a).shape())),
            BroadcastScalar(a, _) => put(a, &|| g.sum().reshape(&v(a).shape())),
            SumRows(a) => put(a, &|| g.broadcast_rows(v(a).shape()[0])),
            SumCols(a) => put(a, &|| g.broadcast_cols(v(a).shape()[1])),
            BroadcastRows(a, _) => put(a, &|| g.sum_rows()),
            BroadcastCols(a, _) => put(a, &|| g.sum_cols()),
            SliceCols(a, s, _) => put(a, &|| g.pad_cols(s, v(a).shape()[1])),
            PadCols(a, s, _) => put(a, &|| g.slice_cols(s, v(a).shape()[1])),
            SliceFlat(a, s, _) => put(a, &|| {
                let shape = v(a).shape();
                g.pad_flat(s, shape.iter().product()).reshape(&shape)
            }),
            PadFlat(a, s, _) => put(a, &|| g.slice_flat(s, v(a).len())),
            Reshape(a, _) => put(a, &|| g.reshape(&v(a).shape())),
            RepeatRows(a, k) => put(a, &|| g.sum_row_groups(k)),
            SumRowGroups(a, k) => put(a, &|| g.repeat_rows(k)),
            LogSoftmax(a) => put(a, &|| {
                let n = y.shape()[1];
                g - y.exp() * g.sum_cols().broadcast_cols(n)
            }),
        }
        out
    }

    /// Forward-mode Jacobian-vector product, traced.
    ///
    /// `inputs` are treated as the independent variables: their tangents are
    /// fixed to `tangents` even if they were themselves computed from other
    /// nodes. Returns the tangent of each output.
    pub fn jvp<'t>(
        &'t self,
        outputs: &[Var<'t>],
        inputs: &[Var<'t>],
        tangents: &[Var<'t>],
    ) -> Result<Vec<Var<'t>>, AutodiffError> {
        if inputs.len() != tangents.len() {
            return Err(AutodiffError::ArityMismatch { expected: inputs.len(), actual: tangents.len() });
        }
        for (k, (x, t)) in inputs.iter().zip(tangents).enumerate() {
            if x.shape() != t.shape() {
                return Err(AutodiffError::ShapeMismatch { index: k, expected: x.shape(), actual: t.shape() });
            }
        }
        let order = outputs
            .iter()
            .chain(inputs)
            .map(|o| self.node(o.id).order)
            .max()
            .unwrap_or(0);
        let saved = self.enter_level(order)?;
        let end = outputs.iter().map(|o| o.id + 1).max().unwrap_or(0);
        let start = inputs.iter().map(|x| x.id).min().unwrap_or(end);
        let mut tan: Vec<Option<Var<'t>>> = vec![None; end];
        let mut fixed = vec![false; end];
        for (x, t) in inputs.iter().zip(tangents) {
            if x.id < end {
                tan[x.id] = Some(*t);
                fixed[x.id] = true;
            }
        }
        for i in start..end {
            if fixed[i] {
                continue;
            }
            let op = self.op(i);
            tan[i] = self.tangent_rule(i, &op, &tan);
        }
        let out = outputs
            .iter()
            .map(|o| tan[o.id].unwrap_or_else(|| self.leaf(Tensor::zeros(&o.shape()))))
            .collect();
        self.level.set(saved);
        Ok(out)
    }

    fn tangent_rule<'t>(&'t self, i: usize, op: &Op, tan: &[Option<Var<'t>>]) -> Option<Var<'t>> {
        use Op::*;
        let y = self.var(i);
        let v = |id: usize| self.var(id);
        let t = |id: usize| tan[id];
        let sum2 = |a: Option<Var<'t>>, b: Option<Var<'t>>| match (a, b) {
            (Some(a), Some(b)) => Some(a + b),
            (a, None) => a,
            (None, b) => b,
        };
        match *op {
            Leaf => None,
            Add(a, b) => sum2(t(a), t(b)),
            Sub(a, b) => sum2(t(a), t(b).map(|tb| -tb)),
            Mul(a, b) => sum2(t(a).map(|ta| ta * v(b)), t(b).map(|tb| v(a) * tb)),
            Neg(a) => t(a).map(|ta| -ta),
            Scale(a, k) => t(a).map(|ta| ta.scale(k)),
            AddScalar(a, _) => t(a),
            MatMul(a, b) => sum2(t(a).map(|ta| ta.matmul(v(b))), t(b).map(|tb| v(a).matmul(tb))),
            Transpose(a) => t(a).map(|ta| ta.t()),
            Tanh(a) => t(a).map(|ta| ta * (y * y).one_minus()),
            Sigmoid(a) => t(a).map(|ta| ta * y * y.one_minus()),
            Exp(a) => t(a).map(|ta| ta * y),
            Log(a) => t(a).map(|ta| ta * v(a).recip()),
            Recip(a) => t(a).map(|ta| -(ta * y * y)),
            AddRow(a, b) => {
                let m = v(a).shape()[0];
                sum2(t(a), t(b).map(|tb| tb.broadcast_rows(m)))
            }
            Sum(a) => t(a).map(|ta| ta.sum()),
            BroadcastScalar(a, ref shape) => t(a).map(|ta| ta.broadcast_scalar(shape)),
            SumRows(a) => t(a).map(|ta| ta.sum_rows()),
            SumCols(a) => t(a).map(|ta| ta.sum_cols()),
            BroadcastRows(a, m) => t(a).map(|ta| ta.broadcast_rows(m)),
            BroadcastCols(a, n) => t(a).map(|ta| ta.broadcast_cols(n)),
            SliceCols(a, s, l) => t(a).map(|ta| ta.slice_cols(s, l)),
            PadCols(a, s, total) => t(a).map(|ta| ta.pad_cols(s, total)),
            SliceFlat(a, s, l) => t(a).map(|ta| ta.slice_flat(s, l)),
            PadFlat(a, s, total) => t(a).map(|ta| ta.pad_flat(s, total)),
            Reshape(a, ref shape) => t(a).map(|ta| ta.reshape(shape)),
            RepeatRows(a, k) => t(a).map(|ta| ta.repeat_rows(k)),
            SumRowGroups(a, k) => t(a).map(|ta| ta.sum_row_groups(k)),
            LogSoftmax(a) => t(a).map(|ta| {
                let n = y.shape()[1];
                ta - (y.exp() * ta).sum_cols().broadcast_cols(n)
            }),
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.node(self.id).value.clone()
    }

    /// Derivative order of this node.
    pub fn order(&self) -> u8 {
        self.tape.node(self.id).order
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.node(self.id).value.shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.tape.node(self.id).value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalar value; panics unless the node holds exactly one element.
    pub fn item(&self) -> f64 {
        self.tape.node(self.id).value.item()
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "combining vars from different tapes"
        );
    }

    fn binary(self, other: Var<'t>, op: fn(usize, usize) -> Op) -> Var<'t> {
        self.same_tape(&other);
        self.tape.push(op(self.id, other.id))
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.tape.push(Op::Scale(self.id, k))
    }

    pub fn add_scalar(self, k: f64) -> Var<'t> {
        self.tape.push(Op::AddScalar(self.id, k))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(self) -> Var<'t> {
        (-self).add_scalar(1.0)
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::MatMul)
    }

    pub fn t(self) -> Var<'t> {
        self.tape.push(Op::Transpose(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.push(Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.push(Op::Sigmoid(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.push(Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.push(Op::Log(self.id))
    }

    pub fn recip(self) -> Var<'t> {
        self.tape.push(Op::Recip(self.id))
    }

    /// `[m, n] + [n]`, the bias broadcast over rows.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        self.binary(bias, Op::AddRow)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(self) -> Var<'t> {
        self.tape.push(Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn broadcast_scalar(self, shape: &[usize]) -> Var<'t> {
        self.tape.push(Op::BroadcastScalar(self.id, shape.to_vec()))
    }

    pub fn sum_rows(self) -> Var<'t> {
        self.tape.push(Op::SumRows(self.id))
    }

    pub fn sum_cols(self) -> Var<'t> {
        self.tape.push(Op::SumCols(self.id))
    }

    pub fn broadcast_rows(self, m: usize) -> Var<'t> {
        self.tape.push(Op::BroadcastRows(self.id, m))
    }

    pub fn broadcast_cols(self, n: usize) -> Var<'t> {
        self.tape.push(Op::BroadcastCols(self.id, n))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        self.tape.push(Op::SliceCols(self.id, start, len))
    }

    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        self.tape.push(Op::PadCols(self.id, start, total))
    }

    pub fn slice_flat(self, start: usize, len: usize) -> Var<'t> {
        self.tape.push(Op::SliceFlat(self.id, start, len))
    }

    pub fn pad_flat(self, start: usize, total: usize) -> Var<'t> {
        self.tape.push(Op::PadFlat(self.id, start, total))
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.len(), "reshape {:?} -> {shape:?}", self.shape());
        self.tape.push(Op::Reshape(self.id, shape.to_vec()))
    }

    pub fn repeat_rows(self, times: usize) -> Var<'t> {
        self.tape.push(Op::RepeatRows(self.id, times))
    }

    pub fn sum_row_groups(self, times: usize) -> Var<'t> {
        self.tape.push(Op::SumRowGroups(self.id, times))
    }

    pub fn log_softmax(self) -> Var<'t> {
        self.tape.push(Op::LogSoftmax(self.id))
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Add)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Sub)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Mul)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.push(Op::Neg(self.id))
    }
}
