//! Iterative magnitude pruning during training, annealing the density.
//!
//! `cargo run --release --example l2_schedule`

use jacprune::cells::{initialize, Arch, CellSpec, InitScheme};
use jacprune::data::{synthetic_task, SyntheticKind, SyntheticSizes};
use jacprune::model::Readout;
use jacprune::training::{train, AdamConfig, L2Schedule, TrainConfig, TrainState};

fn main() -> anyhow::Result<()> {
    let sizes = SyntheticSizes { count: 1200, seq_len: 8, dim: 4, classes: 2, prefix_len: 0 };
    let (tr, val) = synthetic_task(SyntheticKind::LastStepClass, sizes, 2)?.split_holdout(200)?;
    let spec = CellSpec::new(Arch::Lstm, 4, 16)?;
    let state = TrainState::new(initialize(&spec, InitScheme::SMALL_NORMAL, 2)?, Readout::init(16, 2, 2));

    let schedule = L2Schedule { densities: vec![0.6, 0.3, 0.1], interval: 100 };
    let tc = TrainConfig {
        adam: AdamConfig { lr: 1e-2, ..Default::default() },
        batch_size: 32,
        epochs: 50,
        max_steps: Some(400),
        eval_every: 50,
        l2_schedule: Some(schedule),
        ..Default::default()
    };
    let out = train(state, &tr, Some(&val), &tc, &mut |m, _| {
        println!("step {:>4}  retained {:>4}  val error {:.2}%", m.step, m.retained, m.val_error.unwrap_or(f64::NAN));
        Ok(())
    })?;
    for (step, k) in &out.prunes {
        println!("pruned to {k} after step {step}");
    }
    Ok(())
}
