//! Small differentiation engine over dense `f64` tensors.
//!
//! Functions are written against a [`Tape`]: every primitive applied to a
//! [`Var`] is recorded, and the trace can then be differentiated
//!
//! * in reverse mode ([`grad`], [`Tape::grad`]),
//! * in forward mode ([`jvp`] replays the trace with [`DualTensor`]s;
//!   [`Tape::jvp`] records the tangent computation instead),
//! * once more on top of either, for scalars built from first derivatives
//!   ([`grad_of_derived_scalar`], [`hvp`]).
//!
//! ```
//! use jacprune_autodiff::{grad, Tensor};
//!
//! let out = grad(|_, x| x[0] * x[0], &[Tensor::scalar(3.0)]).unwrap();
//! assert_eq!(out.grads[0].item(), 6.0);
//! ```

mod dual;
mod error;
mod tape;
mod tensor;

pub use dual::DualTensor;
pub use error::AutodiffError;
pub use tape::{sigmoid, Tape, TraceNode, Var, MAX_ORDER};
pub use tensor::{pairwise_sum, Tensor};

/// NaN bookkeeping for a derivative computation. NaNs are propagated, never
/// masked; this only counts them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Status {
    pub nan_in_value: usize,
    pub nan_in_derivative: usize,
}

impl Status {
    pub fn is_clean(&self) -> bool {
        self.nan_in_value == 0 && self.nan_in_derivative == 0
    }

    fn of(values: &[&Tensor], derivs: &[Tensor]) -> Status {
        Status {
            nan_in_value: values.iter().map(|t| t.nan_count()).sum(),
            nan_in_derivative: derivs.iter().map(Tensor::nan_count).sum(),
        }
    }
}

/// Result of a reverse-mode pass.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub value: f64,
    pub grads: Vec<Tensor>,
    pub status: Status,
}

/// Result of a forward-mode pass.
#[derive(Clone, Debug)]
pub struct Jvp {
    pub value: Tensor,
    pub tangent: Tensor,
    pub status: Status,
}

fn leaves<'t>(tape: &'t Tape, at: &[Tensor]) -> Vec<Var<'t>> {
    at.iter().map(|t| tape.leaf(t.clone())).collect()
}

fn check_shapes(expected: &[Tensor], actual: &[Tensor]) -> Result<(), AutodiffError> {
    if expected.len() != actual.len() {
        return Err(AutodiffError::ArityMismatch { expected: expected.len(), actual: actual.len() });
    }
    for (index, (e, a)) in expected.iter().zip(actual).enumerate() {
        if e.shape() != a.shape() {
            return Err(AutodiffError::ShapeMismatch {
                index,
                expected: e.shape().to_vec(),
                actual: a.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Gradient of a scalar function with respect to every input.
pub fn grad<F>(f: F, at: &[Tensor]) -> Result<Gradient, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let xs = leaves(&tape, at);
    let y = f(&tape, &xs);
    let gs = tape.grad(y, &xs)?;
    let grads: Vec<Tensor> = gs.iter().map(Var::value).collect();
    let value = y.value();
    Ok(Gradient { value: value.item(), status: Status::of(&[&value], &grads), grads })
}

/// Jacobian-vector product `J(at) · direction` in one forward pass.
pub fn jvp<F>(f: F, at: &[Tensor], direction: &[Tensor]) -> Result<Jvp, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    check_shapes(at, direction)?;
    let tape = Tape::new();
    let xs = leaves(&tape, at);
    let y = f(&tape, &xs);
    let seeds: Vec<(Var<'_>, Tensor)> = xs.iter().copied().zip(direction.iter().cloned()).collect();
    let dual = tape.forward_dual(&seeds, &[y]).pop().expect("one output");
    let status = Status::of(&[&dual.primal], std::slice::from_ref(&dual.tangent));
    Ok(Jvp { value: dual.primal, tangent: dual.tangent, status })
}

/// Gradient of a scalar that is itself built from first derivatives (via
/// [`Tape::jvp`] or [`Tape::grad`] inside `g`). One level of nesting only.
pub fn grad_of_derived_scalar<G>(g: G, at: &[Tensor]) -> Result<Gradient, AutodiffError>
where
    G: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, AutodiffError>,
{
    let tape = Tape::new();
    let xs = leaves(&tape, at);
    let y = g(&tape, &xs)?;
    let gs = tape.grad(y, &xs)?;
    let grads: Vec<Tensor> = gs.iter().map(Var::value).collect();
    let value = y.value();
    Ok(Gradient { value: value.item(), status: Status::of(&[&value], &grads), grads })
}

/// Hessian-vector product: the gradient of `<grad loss, v>`.
pub fn hvp<F>(loss: F, at: &[Tensor], v: &[Tensor]) -> Result<Vec<Tensor>, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    check_shapes(at, v)?;
    let tape = Tape::new();
    let xs = leaves(&tape, at);
    let y = loss(&tape, &xs);
    let hv = hvp_on_tape(&tape, y, &xs, v)?;
    Ok(hv.iter().map(Var::value).collect())
}

/// [`hvp`] on an existing trace.
pub fn hvp_on_tape<'t>(
    tape: &'t Tape,
    loss: Var<'t>,
    params: &[Var<'t>],
    v: &[Tensor],
) -> Result<Vec<Var<'t>>, AutodiffError> {
    let gs = tape.grad(loss, params)?;
    let mut inner: Option<Var<'t>> = None;
    for (g, d) in gs.iter().zip(v) {
        let term = (*g * tape.leaf(d.clone())).sum();
        inner = Some(match inner {
            Some(acc) => acc + term,
            None => term,
        });
    }
    match inner {
        Some(s) => tape.grad(s, params),
        None => Ok(vec![]),
    }
}

/// Full Jacobian of a vector-valued function of one input, one reverse pass
/// per output component. Rows index outputs, columns index inputs.
pub fn jacobian_reverse<F>(f: F, at: &Tensor) -> Result<Tensor, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let x = tape.leaf(at.clone());
    let y = f(&tape, x);
    let (m, n) = (y.len(), at.len());
    let flat = y.reshape(&[m]);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let yi = flat.slice_flat(i, 1).sum();
        out.extend_from_slice(tape.grad(yi, &[x])?[0].value().data());
    }
    Ok(Tensor::matrix(m, n, out))
}

/// Full Jacobian via one forward-mode pass per input component.
pub fn jacobian_forward<F>(f: F, at: &Tensor) -> Result<Tensor, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let x = tape.leaf(at.clone());
    let y = f(&tape, x);
    let (m, n) = (y.len(), at.len());
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = Tensor::zeros(at.shape());
        e.data_mut()[j] = 1.0;
        cols.push(tape.forward_dual(&[(x, e)], &[y]).pop().expect("one output").tangent);
    }
    let mut out = vec![0.0; m * n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..m {
            out[i * n + j] = col.data()[i];
        }
    }
    Ok(Tensor::matrix(m, n, out))
}
