//! Linear readout on the last hidden state and the classification loss.

use jacprune_autodiff::{Tape, Tensor, Var};
use rand_distr::{Distribution, Uniform};

use crate::cells::{bind, unroll_traced, CellSpec, HiddenState, StateVars};
use crate::data::{Batch, SequenceDataset};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Dense `N -> C` layer. Never pruned.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    /// `[N, C]`
    pub weight: Tensor,
    /// `[C]`
    pub bias: Tensor,
}

impl Readout {
    /// Glorot-uniform weights, zero bias.
    pub fn init(hidden: usize, classes: usize, seed: u64) -> Readout {
        let a = (6.0 / (hidden + classes) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let mut rng = stream(seed, Stream::Readout);
        let w = (0..hidden * classes).map(|_| dist.sample(&mut rng)).collect();
        Readout { weight: Tensor::matrix(hidden, classes, w), bias: Tensor::zeros(&[classes]) }
    }

    pub fn hidden(&self) -> usize {
        self.weight.dims2().0
    }

    pub fn classes(&self) -> usize {
        self.weight.dims2().1
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weight.data().to_vec();
        v.extend_from_slice(self.bias.data());
        v
    }

    pub fn from_flat(hidden: usize, classes: usize, flat: &[f64]) -> Result<Readout> {
        if flat.len() != hidden * classes + classes {
            return Err(Error::Dim { what: "readout vector", expected: hidden * classes + classes, actual: flat.len() });
        }
        let (w, b) = flat.split_at(hidden * classes);
        Ok(Readout { weight: Tensor::matrix(hidden, classes, w.to_vec()), bias: Tensor::vector(b.to_vec()) })
    }
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        t.data_mut()[i * classes + l] = 1.0;
    }
    Ok(t)
}

/// Logits `[B, C]` from the final hidden state.
pub fn logits_traced<'t>(spec: &CellSpec, theta: Var<'t>, w: Var<'t>, b: Var<'t>, xs: &[Var<'t>]) -> Result<Var<'t>> {
    let tape = theta.tape();
    let batch = xs.first().ok_or_else(|| Error::invalid("empty sequence"))?.shape()[0];
    let cell = bind(spec, theta)?;
    let init = StateVars::leaf(tape, &HiddenState::zeros(spec, batch));
    let last = *unroll_traced(&cell, xs, init).last().expect("non-empty");
    Ok(last.h.matmul(w).add_row(b))
}

/// Mean softmax cross-entropy of `logits` against integer labels.
pub fn cross_entropy<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::Dim { what: "label count", expected: b, actual: labels.len() });
    }
    let target = logits.tape().leaf(one_hot(labels, c)?);
    Ok((logits.log_softmax() * target).sum().scale(-1.0 / b as f64))
}

/// Traced last-step loss; returns `(loss, theta, readout weight, readout bias)`.
pub fn loss_traced<'t>(
    tape: &'t Tape,
    spec: &CellSpec,
    theta: &[f64],
    readout: &Readout,
    batch: &Batch,
) -> Result<(Var<'t>, Var<'t>, Var<'t>, Var<'t>)> {
    let labels = batch.labels.as_ref().ok_or_else(|| Error::invalid("batch carries no class labels"))?;
    let th = tape.leaf(Tensor::vector(theta.to_vec()));
    let w = tape.leaf(readout.weight.clone());
    let b = tape.leaf(readout.bias.clone());
    let xs: Vec<_> = batch.xs.iter().map(|x| tape.leaf(x.clone())).collect();
    let logits = logits_traced(spec, th, w, b, &xs)?;
    Ok((cross_entropy(logits, labels)?, th, w, b))
}

/// Loss value and gradients with respect to the cell parameters and readout.
pub struct LossGrad {
    pub loss: f64,
    pub theta: Vec<f64>,
    pub readout: Vec<f64>,
}

pub fn loss_and_grad(spec: &CellSpec, theta: &[f64], readout: &Readout, batch: &Batch) -> Result<LossGrad> {
    let tape = Tape::new();
    let (loss, th, w, b) = loss_traced(&tape, spec, theta, readout, batch)?;
    let g = tape.grad(loss, &[th, w, b])?;
    let mut ro = g[1].value().into_data();
    ro.extend_from_slice(g[2].value().data());
    Ok(LossGrad { loss: loss.item(), theta: g[0].value().into_data(), readout: ro })
}

/// Logits without building a trace for the readout.
pub fn logits(spec: &CellSpec, theta: &[f64], readout: &Readout, batch: &Batch) -> Result<Tensor> {
    let states = crate::cells::unroll(spec, theta, &batch.xs)?;
    let h = &states.last().expect("non-empty").h;
    Ok(h.matmul(&readout.weight).add_row(&readout.bias))
}

pub fn predict(spec: &CellSpec, theta: &[f64], readout: &Readout, batch: &Batch) -> Result<Vec<usize>> {
    Ok(logits(spec, theta, readout, batch)?.argmax_rows())
}

/// Top-1 error in percent over a whole dataset, evaluated in chunks.
pub fn error_percent(
    spec: &CellSpec,
    theta: &[f64],
    readout: &Readout,
    data: &SequenceDataset,
    chunk: usize,
) -> Result<f64> {
    let labels = data.labels().ok_or_else(|| Error::invalid("dataset carries no class labels"))?;
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let mut wrong = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let pred = predict(spec, theta, readout, &data.batch(part))?;
        wrong += part.iter().zip(&pred).filter(|(&i, &p)| labels[i] != p).count();
    }
    Ok(100.0 * wrong as f64 / data.len() as f64)
}
