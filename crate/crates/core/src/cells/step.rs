use jacprune_autodiff::{Tape, Tensor, Var};

use super::{Activation, Arch, BlockKind, CellSpec, Role};
use crate::error::{Error, Result};

/// Recurrent state for a batch: `h` is `[B, N]`, `c` (LSTM variants) likewise.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Tensor,
    pub c: Option<Tensor>,
}

impl HiddenState {
    pub fn zeros(spec: &CellSpec, batch: usize) -> Self {
        let n = spec.hidden_dim;
        HiddenState {
            h: Tensor::zeros(&[batch, n]),
            c: spec.arch.has_cell_state().then(|| Tensor::zeros(&[batch, n])),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.dims2().0
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.c.as_ref().is_none_or(Tensor::is_finite)
    }

    /// Single-sample state `b` of a batch.
    pub fn row(&self, b: usize) -> HiddenState {
        let pick = |t: &Tensor| Tensor::matrix(1, t.dims2().1, t.row(b).to_vec());
        HiddenState { h: pick(&self.h), c: self.c.as_ref().map(pick) }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GateWeights<'t> {
    pub input: Var<'t>,
    pub recurrent: Var<'t>,
    pub peephole: Option<Var<'t>>,
    pub bias: Var<'t>,
}

#[derive(Clone, Debug)]
pub struct CellWeights<'t> {
    pub spec: CellSpec,
    pub gates: Vec<GateWeights<'t>>,
}

#[derive(Clone, Copy, Debug)]
pub struct StateVars<'t> {
    pub h: Var<'t>,
    pub c: Option<Var<'t>>,
}

impl<'t> StateVars<'t> {
    pub fn leaf(tape: &'t Tape, state: &HiddenState) -> Self {
        StateVars { h: tape.leaf(state.h.clone()), c: state.c.as_ref().map(|c| tape.leaf(c.clone())) }
    }

    pub fn value(&self) -> HiddenState {
        HiddenState { h: self.h.value(), c: self.c.map(|c| c.value()) }
    }
}

/// Slices a flat parameter vector `[P]` into per-gate weight views.
pub fn bind<'t>(spec: &CellSpec, theta: Var<'t>) -> Result<CellWeights<'t>> {
    let layout = spec.layout();
    if theta.len() != layout.len() {
        return Err(Error::Dim { what: "parameter vector", expected: layout.len(), actual: theta.len() });
    }
    let mut gates = Vec::with_capacity(layout.num_gates());
    for gate in 0..layout.num_gates() {
        let get = |role, diag| layout.find(gate, role, diag).copied();
        let view = |b: super::Block| {
            let flat = theta.slice_flat(b.offset, b.len);
            match b.kind {
                BlockKind::Matrix { rows, cols } => flat.reshape(&[rows, cols]),
                BlockKind::Diagonal | BlockKind::Vector => flat,
            }
        };
        gates.push(GateWeights {
            input: view(get(Role::Input, false).expect("input block")),
            recurrent: view(get(Role::Recurrent, false).expect("recurrent block")),
            peephole: get(Role::Recurrent, true).map(view),
            bias: view(get(Role::Bias, false).expect("bias block")),
        });
    }
    Ok(CellWeights { spec: *spec, gates })
}

fn affine<'t>(g: &GateWeights<'t>, x: Var<'t>, h: Var<'t>) -> Var<'t> {
    (x.matmul(g.input) + h.matmul(g.recurrent)).add_row(g.bias)
}

fn peep<'t>(pre: Var<'t>, g: &GateWeights<'t>, c: Var<'t>) -> Var<'t> {
    match g.peephole {
        Some(p) => pre + c * p.broadcast_rows(c.shape()[0]),
        None => pre,
    }
}

/// One traced time step. `x` is `[B, D]`.
pub fn step_traced<'t>(w: &CellWeights<'t>, x: Var<'t>, s: &StateVars<'t>) -> StateVars<'t> {
    let spec = &w.spec;
    let h = s.h;
    match spec.arch {
        Arch::Rnn => {
            let pre = affine(&w.gates[0], x, h);
            let h = match spec.activation {
                Activation::Tanh => pre.tanh(),
                Activation::Identity => pre,
            };
            StateVars { h, c: None }
        }
        Arch::Gru => {
            let [gz, gr, gn] = [w.gates[0], w.gates[1], w.gates[2]];
            let z = affine(&gz, x, h).sigmoid();
            let r = affine(&gr, x, h).sigmoid();
            let n = (x.matmul(gn.input) + (r * h).matmul(gn.recurrent)).add_row(gn.bias).tanh();
            StateVars { h: h + z * (n - h), c: None }
        }
        Arch::Lstm | Arch::PeepholeLstm => {
            let c = s.c.expect("LSTM state carries a cell state");
            let [gi, gf, gg, go] = [w.gates[0], w.gates[1], w.gates[2], w.gates[3]];
            let i = peep(affine(&gi, x, h), &gi, c).sigmoid();
            let f = peep(affine(&gf, x, h), &gf, c).sigmoid();
            let g = affine(&gg, x, h).tanh();
            let c_next = f * c + i * g;
            let o = peep(affine(&go, x, h), &go, c_next).sigmoid();
            StateVars { h: o * c_next.tanh(), c: Some(c_next) }
        }
    }
}

/// Traced unroll over per-step inputs `xs[t]` of shape `[B, D]`; returns the
/// states after every step.
pub fn unroll_traced<'t>(w: &CellWeights<'t>, xs: &[Var<'t>], init: StateVars<'t>) -> Vec<StateVars<'t>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut s = init;
    for &x in xs {
        s = step_traced(w, x, &s);
        out.push(s);
    }
    out
}

fn check_batch(spec: &CellSpec, x: &Tensor, state: &HiddenState) -> Result<()> {
    let (b, d) = x.dims2();
    if d != spec.input_dim {
        return Err(Error::Dim { what: "input width", expected: spec.input_dim, actual: d });
    }
    let (hb, n) = state.h.dims2();
    if n != spec.hidden_dim {
        return Err(Error::Dim { what: "hidden width", expected: spec.hidden_dim, actual: n });
    }
    if hb != b {
        return Err(Error::Dim { what: "state batch", expected: b, actual: hb });
    }
    if spec.arch.has_cell_state() != state.c.is_some() {
        return Err(Error::invalid(format!("{:?} state cell-state presence mismatch", spec.arch)));
    }
    Ok(())
}

/// Next state for a batch of inputs `[B, D]`. `theta` is the effective
/// (already masked) parameter vector.
pub fn step(spec: &CellSpec, theta: &[f64], x: &Tensor, state: &HiddenState) -> Result<HiddenState> {
    check_batch(spec, x, state)?;
    let tape = Tape::new();
    let w = bind(spec, tape.leaf(Tensor::vector(theta.to_vec())))?;
    let s = StateVars::leaf(&tape, state);
    Ok(step_traced(&w, tape.leaf(x.clone()), &s).value())
}

/// States `h^(1..S)` for per-step inputs `xs[t]` of shape `[B, D]`, from a
/// zero initial state.
pub fn unroll(spec: &CellSpec, theta: &[f64], xs: &[Tensor]) -> Result<Vec<HiddenState>> {
    let first = xs.first().ok_or_else(|| Error::invalid("cannot unroll an empty sequence"))?;
    let init = HiddenState::zeros(spec, first.dims2().0);
    for x in xs {
        check_batch(spec, x, &init)?;
    }
    let tape = Tape::new();
    let w = bind(spec, tape.leaf(Tensor::vector(theta.to_vec())))?;
    let xs: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
    let states = unroll_traced(&w, &xs, StateVars::leaf(&tape, &init));
    Ok(states.iter().map(StateVars::value).collect())
}

/// Exact `∂h'/∂h` for every sample of a batch (cell state held fixed for
/// the LSTM variants). All `N` directions are pushed through one forward
/// pass by replicating each sample `N` times.
pub fn temporal_jacobians(spec: &CellSpec, theta: &[f64], x: &Tensor, state: &HiddenState) -> Result<Vec<Tensor>> {
    check_batch(spec, x, state)?;
    let (b, n) = (state.batch(), spec.hidden_dim);
    let tape = Tape::new();
    let w = bind(spec, tape.leaf(Tensor::vector(theta.to_vec())))?;
    let h_rep = tape.leaf(state.h.repeat_rows(n));
    let s = StateVars { h: h_rep, c: state.c.as_ref().map(|c| tape.leaf(c.repeat_rows(n))) };
    let next = step_traced(&w, tape.leaf(x.repeat_rows(n)), &s);
    let tangent = Tensor::eye(n).reshape(&[n * n]).broadcast_rows(b).reshape(&[b * n, n]);
    let cols = tape.forward_dual(&[(h_rep, tangent)], &[next.h]).remove(0).tangent;
    // Row (b, j) of `cols` is column j of J_b.
    Ok((0..b)
        .map(|k| {
            let block = Tensor::matrix(n, n, cols.data()[k * n * n..(k + 1) * n * n].to_vec());
            block.transpose()
        })
        .collect())
}

/// Exact temporal Jacobian for a single input row `[1, D]` and state.
pub fn temporal_jacobian(spec: &CellSpec, theta: &[f64], x: &Tensor, state: &HiddenState) -> Result<Tensor> {
    if x.dims2().0 != 1 {
        return Err(Error::Dim { what: "single-sample batch", expected: 1, actual: x.dims2().0 });
    }
    Ok(temporal_jacobians(spec, theta, x, state)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(spec: &CellSpec) -> Vec<f64> {
        vec![0.0; spec.param_count()]
    }

    #[test]
    fn gru_with_zero_parameters_stays_at_zero() {
        let spec = CellSpec::new(Arch::Gru, 3, 4).unwrap();
        let x = Tensor::matrix(1, 3, vec![0.3, -2.0, 5.0]);
        let next = step(&spec, &zeros(&spec), &x, &HiddenState::zeros(&spec, 1)).unwrap();
        assert_eq!(next.h, Tensor::zeros(&[1, 4]));
    }

    #[test]
    fn rnn_with_zero_parameters_stays_at_zero() {
        let spec = CellSpec::new(Arch::Rnn, 2, 3).unwrap();
        let x = Tensor::matrix(1, 2, vec![1.0, 1.0]);
        let next = step(&spec, &zeros(&spec), &x, &HiddenState::zeros(&spec, 1)).unwrap();
        assert_eq!(next.h, Tensor::zeros(&[1, 3]));
    }

    #[test]
    fn lstm_forget_bias_keeps_cell() {
        let spec = CellSpec::new(Arch::Lstm, 2, 3).unwrap();
        let layout = spec.layout();
        let mut theta = zeros(&spec);
        let fb = layout.find(1, Role::Bias, false).unwrap();
        theta[fb.offset..fb.offset + fb.len].fill(10.0);
        let state = HiddenState { h: Tensor::zeros(&[1, 3]), c: Some(Tensor::ones(&[1, 3])) };
        let next = step(&spec, &theta, &Tensor::matrix(1, 2, vec![0.4, -0.2]), &state).unwrap();
        // Hand evaluation: c' = σ(10)·1 + σ(0)·tanh(0), h' = σ(0)·tanh(c').
        let sig10 = 1.0 / (1.0 + (-10f64).exp());
        for &c in next.c.as_ref().unwrap().data() {
            assert!((c - sig10).abs() < 1e-15);
            assert!((c - 0.99995).abs() < 1e-5);
        }
        for &h in next.h.data() {
            assert!((h - 0.5 * sig10.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = CellSpec::new(Arch::Gru, 3, 4).unwrap();
        let err = step(&spec, &zeros(&spec), &Tensor::zeros(&[1, 2]), &HiddenState::zeros(&spec, 1)).unwrap_err();
        assert!(matches!(err, Error::Dim { what: "input width", .. }));
        assert!(step(&spec, &[0.0; 3], &Tensor::zeros(&[1, 3]), &HiddenState::zeros(&spec, 1)).is_err());
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let spec = CellSpec::new(Arch::Rnn, 1, 1).unwrap();
        assert!(unroll(&spec, &zeros(&spec), &[]).is_err());
    }

    #[test]
    fn linear_rnn_jacobian_is_recurrent_matrix() {
        let spec = CellSpec::linear_rnn(2, 3).unwrap();
        let theta: Vec<f64> = (0..spec.param_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Tensor::matrix(1, 2, vec![0.5, -0.5]);
        let state = HiddenState { h: Tensor::matrix(1, 3, vec![0.1, 0.2, -0.3]), c: None };
        let j = temporal_jacobian(&spec, &theta, &x, &state).unwrap();
        // h' = x Wx + h Wh + b, so dh'_i/dh_j = Wh[j, i].
        let wh = Tensor::matrix(3, 3, theta[6..15].to_vec());
        assert_eq!(j, wh.transpose());
    }
}
