//! Prunes a GRU at initialization and trains the sparse network.
//!
//! `cargo run --release --example train_sparse`

use jacprune::cells::{initialize, Arch, CellSpec, InitScheme};
use jacprune::criteria::{mask_for, score, CriterionConfig, CriterionKind};
use jacprune::data::{synthetic_task, SyntheticKind, SyntheticSizes};
use jacprune::model::Readout;
use jacprune::training::{train, AdamConfig, TrainConfig, TrainState};

fn main() -> anyhow::Result<()> {
    let sizes = SyntheticSizes { count: 1200, seq_len: 8, dim: 4, classes: 2, prefix_len: 0 };
    let (tr, val) = synthetic_task(SyntheticKind::LastStepClass, sizes, 0)?.split_holdout(200)?;

    let spec = CellSpec::new(Arch::Gru, 4, 16)?;
    let mut params = initialize(&spec, InitScheme::SMALL_NORMAL, 0)?;
    let cfg = CriterionConfig::default();
    let sv = score(CriterionKind::Jacobian, &params, None, &tr.batch(&(0..64).collect::<Vec<_>>()), &cfg)?;
    params.set_mask(mask_for(&sv, &spec, 0.5)?)?;
    println!("kept {} of {} parameters", params.retained(), params.len());

    let state = TrainState::new(params, Readout::init(16, 2, 0));
    let tc = TrainConfig {
        adam: AdamConfig { lr: 1e-2, ..Default::default() },
        batch_size: 32,
        epochs: 20,
        max_steps: Some(400),
        eval_every: 100,
        ..Default::default()
    };
    let out = train(state, &tr, Some(&val), &tc, &mut |m, _| {
        println!("step {:>4}  loss {:.4}  val error {:.2}%", m.step, m.loss, m.val_error.unwrap_or(f64::NAN));
        Ok(())
    })?;
    out.state.audit()?;
    Ok(())
}
