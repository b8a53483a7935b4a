//! Numeric forward mode: a primal/tangent pair pushed through a recorded trace.

use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// A primal value together with one directional derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTensor {
    pub primal: Tensor,
    pub tangent: Tensor,
}

impl DualTensor {
    pub fn new(primal: Tensor, tangent: Tensor) -> Self {
        assert_eq!(
            primal.shape(),
            tangent.shape(),
            "dual tensor with primal {:?} and tangent {:?}",
            primal.shape(),
            tangent.shape()
        );
        DualTensor { primal, tangent }
    }

    pub fn constant(primal: Tensor) -> Self {
        let tangent = Tensor::zeros(primal.shape());
        DualTensor { primal, tangent }
    }

    /// Applies one recorded op to dual parents.
    pub(crate) fn apply(op: &Op, primal: Tensor, d: impl Fn(usize) -> DualTensor) -> DualTensor {
        use Op::*;
        let tangent = match op {
            Leaf => unreachable!("leaves are seeded directly"),
            Add(a, b) => d(*a).tangent.add(&d(*b).tangent),
            Sub(a, b) => d(*a).tangent.sub(&d(*b).tangent),
            Mul(a, b) => {
                let (a, b) = (d(*a), d(*b));
                a.tangent.mul(&b.primal).add(&a.primal.mul(&b.tangent))
            }
            Neg(a) => d(*a).tangent.map(|x| -x),
            Scale(a, k) => d(*a).tangent.scale(*k),
            AddScalar(a, _) => d(*a).tangent,
            MatMul(a, b) => {
                let (a, b) = (d(*a), d(*b));
                a.tangent.matmul(&b.primal).add(&a.primal.matmul(&b.tangent))
            }
            Transpose(a) => d(*a).tangent.transpose(),
            Tanh(a) => d(*a).tangent.zip_map(&primal, |t, y| t * (1.0 - y * y)),
            Sigmoid(a) => d(*a).tangent.zip_map(&primal, |t, y| t * y * (1.0 - y)),
            Exp(a) => d(*a).tangent.mul(&primal),
            Log(a) => {
                let a = d(*a);
                a.tangent.zip_map(&a.primal, |t, x| t / x)
            }
            Recip(a) => d(*a).tangent.zip_map(&primal, |t, y| -t * y * y),
            AddRow(a, b) => {
                let m = d(*a).primal.shape()[0];
                d(*a).tangent.add(&d(*b).tangent.broadcast_rows(m))
            }
            Sum(a) => Tensor::scalar(d(*a).tangent.sum()),
            BroadcastScalar(a, shape) => Tensor::full(shape, d(*a).tangent.item()),
            SumRows(a) => d(*a).tangent.sum_rows(),
            SumCols(a) => d(*a).tangent.sum_cols(),
            BroadcastRows(a, m) => d(*a).tangent.broadcast_rows(*m),
            BroadcastCols(a, n) => d(*a).tangent.broadcast_cols(*n),
            SliceCols(a, s, l) => d(*a).tangent.slice_cols(*s, *l),
            PadCols(a, s, t) => d(*a).tangent.pad_cols(*s, *t),
            SliceFlat(a, s, l) => d(*a).tangent.slice_flat(*s, *l),
            PadFlat(a, s, t) => d(*a).tangent.pad_flat(*s, *t),
            Reshape(a, shape) => d(*a).tangent.reshape(shape),
            RepeatRows(a, k) => d(*a).tangent.repeat_rows(*k),
            SumRowGroups(a, k) => d(*a).tangent.sum_row_groups(*k),
            LogSoftmax(a) => {
                let ta = d(*a).tangent;
                let n = primal.shape()[1];
                let inner = primal.map(f64::exp).mul(&ta).sum_cols().broadcast_cols(n);
                ta.sub(&inner)
            }
        };
        DualTensor::new(primal, tangent)
    }
}

impl Tape {
    /// Replays the trace in forward mode, seeding `inputs` with `tangents`
    /// and every other leaf with a zero tangent. One pass over the trace.
    pub fn forward_dual(&self, inputs: &[(Var<'_>, Tensor)], outputs: &[Var<'_>]) -> Vec<DualTensor> {
        let end = outputs.iter().map(|o| o.id() + 1).max().unwrap_or(0);
        let mut duals: Vec<DualTensor> = Vec::with_capacity(end);
        for i in 0..end {
            let node = self.node(i);
            let dual = if node.is_leaf() {
                match inputs.iter().find(|(v, _)| v.id() == i) {
                    Some((_, t)) => DualTensor::new(node.value().clone(), t.clone()),
                    None => DualTensor::constant(node.value().clone()),
                }
            } else {
                let op = node.op.clone();
                drop(node);
                let primal = op.eval(|p| duals[p].primal.clone());
                DualTensor::apply(&op, primal, |p| duals[p].clone())
            };
            duals.push(dual);
        }
        outputs.iter().map(|o| duals[o.id()].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_at_zero_passes_direction_through() {
        let tape = Tape::new();
        let h = tape.leaf(Tensor::zeros(&[3]));
        let y = h.tanh();
        let v = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let out = tape.forward_dual(&[(h, v.clone())], &[y]);
        assert_eq!(out[0].tangent, v);
        assert_eq!(out[0].primal, Tensor::zeros(&[3]));
    }

    #[test]
    #[should_panic(expected = "dual tensor")]
    fn mismatched_dual_panics() {
        DualTensor::new(Tensor::zeros(&[2]), Tensor::zeros(&[3]));
    }
}
