use jacprune_autodiff::{hvp_on_tape, Tape};

use super::{CriterionConfig, CriterionKind, SensitivityVector};
use crate::cells::CellSpec;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::{loss_and_grad, loss_traced, Readout};

fn nan_check(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| x.is_nan()) {
        Some(i) => Err(Error::Numeric(format!("NaN in {what} at index {i}"))),
        None => Ok(()),
    }
}

/// `|θ_n g_n|` with `g` the minibatch-mean loss gradient. The readout is a
/// constant here.
pub fn snip_score(
    spec: &CellSpec,
    theta: &[f64],
    readout: &Readout,
    batch: &Batch,
    config: &CriterionConfig,
) -> Result<SensitivityVector> {
    let g = loss_and_grad(spec, theta, readout, batch)?.theta;
    nan_check(&g, "loss gradient")?;
    let scores = theta.iter().zip(&g).map(|(t, g)| (t * g).abs()).collect();
    Ok(SensitivityVector::new(scores, CriterionKind::Snip, config))
}

/// `θ_n (Hg)_n` from one Hessian-vector product in the direction of the
/// loss gradient. Signed unless `config.foresight_abs`.
pub fn foresight_score(
    spec: &CellSpec,
    theta: &[f64],
    readout: &Readout,
    batch: &Batch,
    config: &CriterionConfig,
) -> Result<SensitivityVector> {
    let tape = Tape::new();
    let (loss, th, _, _) = loss_traced(&tape, spec, theta, readout, batch)?;
    let g = tape.grad(loss, &[th])?.remove(0).value();
    let hg = hvp_on_tape(&tape, loss, &[th], &[g])?.remove(0).value();
    nan_check(hg.data(), "Hessian-gradient product")?;
    let scores = theta
        .iter()
        .zip(hg.data())
        .map(|(t, h)| if config.foresight_abs { (t * h).abs() } else { t * h })
        .collect();
    Ok(SensitivityVector::new(scores, CriterionKind::Foresight, config))
}
