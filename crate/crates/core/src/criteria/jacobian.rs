use jacprune_autodiff::{Tape, Tensor, Var};

use super::{CriterionConfig, CriterionKind, Probe, SensitivityVector};
use crate::cells::{bind, temporal_jacobians, unroll, unroll_traced, CellSpec, HiddenState, StateVars};
use crate::data::{sample_approx, ApproxDistribution, Batch};
use crate::error::{Error, Result};

/// Element budget for one replicated `[chunk·N, N]` tangent block.
const CHUNK_BUDGET: usize = 1 << 19;

#[derive(Clone, Debug, PartialEq)]
pub struct ChiEstimate {
    /// `χ^(u)` for `u = 1..=U`, i.e. the Jacobians `J_{S-1}, …, J_{S-U}`.
    pub per_step: Vec<f64>,
    /// `(1/U) Σ_u χ^(u)`.
    pub chi: f64,
}

fn check(spec: &CellSpec, batch: &Batch, horizon: usize) -> Result<()> {
    if batch.size() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if horizon == 0 || horizon >= batch.seq_len() {
        return Err(Error::invalid(format!(
            "horizon {horizon} must lie in 1..{} for sequences of length {}",
            batch.seq_len(),
            batch.seq_len()
        )));
    }
    if batch.xs[0].dims2().1 != spec.input_dim {
        return Err(Error::Dim { what: "input width", expected: spec.input_dim, actual: batch.xs[0].dims2().1 });
    }
    Ok(())
}

/// `χ` from explicitly formed Jacobians (Frobenius) or a ones-vector
/// forward pass, normalized by `N` and averaged over the batch.
///
/// `J_t = ∂h^(t+1)/∂h^(t)` is taken at state `h^(t)` with input `x^(t+1)`;
/// for the LSTM variants the cell state is held fixed.
pub fn chi_estimate(spec: &CellSpec, theta: &[f64], batch: &Batch, horizon: usize, probe: Probe) -> Result<ChiEstimate> {
    check(spec, batch, horizon)?;
    let (b, n, s) = (batch.size(), spec.hidden_dim, batch.seq_len());
    let states = unroll(spec, theta, &batch.xs)?;
    let mut per_step = Vec::with_capacity(horizon);
    for u in 1..=horizon {
        let t = s - u;
        let state = &states[t - 1];
        let total = match probe {
            Probe::Frobenius => temporal_jacobians(spec, theta, &batch.xs[t], state)?
                .iter()
                .map(Tensor::norm_sq)
                .sum::<f64>(),
            Probe::OnesVector => {
                let tape = Tape::new();
                let w = bind(spec, tape.leaf(Tensor::vector(theta.to_vec())))?;
                let sv = StateVars::leaf(&tape, state);
                let next = crate::cells::step_traced(&w, tape.leaf(batch.xs[t].clone()), &sv);
                let jv = tape.forward_dual(&[(sv.h, Tensor::ones(&[b, n]))], &[next.h]).remove(0).tangent;
                jv.norm_sq()
            }
        };
        per_step.push(total / (n * b) as f64);
    }
    let chi = per_step.iter().sum::<f64>() / horizon as f64;
    Ok(ChiEstimate { per_step, chi })
}

/// Traced `Σ_b probe(J_t)` for one chunk of sequences; `t ≥ 1`.
fn traced_probe<'t>(spec: &CellSpec, theta: Var<'t>, xs: &[Tensor], t: usize, probe: Probe) -> Result<Var<'t>> {
    let tape = theta.tape();
    let (b, n) = (xs[0].dims2().0, spec.hidden_dim);
    let w = bind(spec, theta)?;
    let xs_v: Vec<_> = xs[..t].iter().map(|x| tape.leaf(x.clone())).collect();
    let init = StateVars::leaf(tape, &HiddenState::zeros(spec, b));
    let st = *unroll_traced(&w, &xs_v, init).last().expect("t >= 1");
    let jv = match probe {
        Probe::Frobenius => {
            // Each sample repeated N times with the identity as tangent: row
            // (b, j) of the output tangent is column j of J_b.
            let h_rep = st.h.repeat_rows(n);
            let s_rep = StateVars { h: h_rep, c: st.c.map(|c| c.repeat_rows(n)) };
            let next = crate::cells::step_traced(&w, tape.leaf(xs[t].repeat_rows(n)), &s_rep);
            let eye = tape.leaf(Tensor::eye(n).reshape(&[n * n]).broadcast_rows(b).reshape(&[b * n, n]));
            tape.jvp(&[next.h], &[h_rep], &[eye])?.remove(0)
        }
        Probe::OnesVector => {
            let next = crate::cells::step_traced(&w, tape.leaf(xs[t].clone()), &st);
            let ones = tape.leaf(Tensor::ones(&[b, n]));
            tape.jvp(&[next.h], &[st.h], &[ones])?.remove(0)
        }
    };
    Ok(jv.square().sum())
}

fn chunk_size(config: &CriterionConfig, spec: &CellSpec) -> usize {
    match (config.chunk, config.probe) {
        (Some(c), _) => c,
        (None, Probe::OnesVector) => usize::MAX,
        (None, Probe::Frobenius) => (CHUNK_BUDGET / (spec.hidden_dim * spec.hidden_dim)).max(1),
    }
}

/// Sensitivity `d_n = Σ_u |∂χ^(u)/∂θ_n|` over the last `U` temporal
/// Jacobians of `batch`. The gradient runs through the whole unroll, so it
/// includes the dependence of `h^(t)` on `θ`. `γ` division is applied by
/// [`super::score`], not here.
pub fn jacobian_sensitivity(
    spec: &CellSpec,
    theta: &[f64],
    batch: &Batch,
    config: &CriterionConfig,
) -> Result<SensitivityVector> {
    config.validate(Some(batch.seq_len()))?;
    check(spec, batch, config.horizon)?;
    if theta.len() != spec.param_count() {
        return Err(Error::Dim { what: "parameter vector", expected: spec.param_count(), actual: theta.len() });
    }
    let (b, n, s) = (batch.size(), spec.hidden_dim, batch.seq_len());
    let norm = 1.0 / (n * b) as f64;
    let chunk = chunk_size(config, spec).min(b);
    let mut scores = vec![0.0; theta.len()];
    let mut per_step = Vec::with_capacity(config.horizon);
    for u in 1..=config.horizon {
        let t = s - u;
        let mut grad_u = vec![0.0; theta.len()];
        let mut chi_u = 0.0;
        for start in (0..b).step_by(chunk) {
            let part = batch.slice(start, chunk.min(b - start));
            let tape = Tape::new();
            let th = tape.leaf(Tensor::vector(theta.to_vec()));
            let total = traced_probe(spec, th, &part.xs[..=t], t, config.probe)?.scale(norm);
            chi_u += total.item();
            let g = tape.grad(total, &[th])?.remove(0).value();
            for (acc, gi) in grad_u.iter_mut().zip(g.data()) {
                *acc += gi;
            }
        }
        if grad_u.iter().any(|g| g.is_nan()) {
            return Err(Error::Numeric(format!("NaN in the gradient of chi at horizon step {u}")));
        }
        for (d, g) in scores.iter_mut().zip(&grad_u) {
            *d += g.abs();
        }
        per_step.push(chi_u);
    }
    let mut out = SensitivityVector::new(scores, CriterionKind::Jacobian, config);
    out.chi = Some(per_step.iter().sum::<f64>() / config.horizon as f64);
    Ok(out)
}

/// `γ_n = mean over sequences of Σ_t Σ_i ∂h̃_i^(t)/∂θ_n`, sequences drawn
/// from `dist` with `count` samples.
pub fn gamma_normalizer(
    spec: &CellSpec,
    theta: &[f64],
    dist: &ApproxDistribution,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if dist.dim != spec.input_dim {
        return Err(Error::Dim { what: "approximate input width", expected: spec.input_dim, actual: dist.dim });
    }
    let batch = sample_approx(dist, count, seed)?;
    let tape = Tape::new();
    let th = tape.leaf(Tensor::vector(theta.to_vec()));
    let w = bind(spec, th)?;
    let xs: Vec<_> = batch.xs.iter().map(|x| tape.leaf(x.clone())).collect();
    let states = unroll_traced(&w, &xs, StateVars::leaf(&tape, &HiddenState::zeros(spec, count)));
    let total = states
        .iter()
        .map(|st| st.h.sum())
        .reduce(|a, b| a + b)
        .expect("non-empty sequence")
        .scale(1.0 / count as f64);
    Ok(tape.grad(total, &[th])?.remove(0).value().into_data())
}
