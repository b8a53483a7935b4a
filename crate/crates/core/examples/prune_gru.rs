//! Scores a GRU with every criterion and shows where each mask puts its budget.
//!
//! `cargo run --release --example prune_gru`

use jacprune::analysis::connectivity_stats;
use jacprune::cells::{initialize, Arch, CellSpec, InitScheme};
use jacprune::criteria::{mask_for, score, CriterionConfig, CriterionKind};
use jacprune::data::{synthetic_task, SyntheticKind, SyntheticSizes};
use jacprune::model::Readout;

fn main() -> anyhow::Result<()> {
    let sizes = SyntheticSizes { count: 256, seq_len: 10, dim: 6, classes: 3, prefix_len: 0 };
    let data = synthetic_task(SyntheticKind::LastStepClass, sizes, 1)?;
    let batch = data.batch(&(0..64).collect::<Vec<_>>());

    let spec = CellSpec::new(Arch::Gru, 6, 24)?;
    let params = initialize(&spec, InitScheme::SMALL_NORMAL, 1)?;
    let readout = Readout::init(24, 3, 1);
    let layout = spec.layout();
    let cfg = CriterionConfig { seed: 1, ..Default::default() };

    println!("P = {}, keeping 10%", params.len());
    println!("{:<10} {:>7} {:>28}", "criterion", "I/R", "gate shares");
    for kind in CriterionKind::ALL {
        let sv = score(kind, &params, Some(&readout), &batch, &cfg)?;
        let mask = mask_for(&sv, &spec, 0.9)?;
        let r = connectivity_stats(&mask, &layout)?;
        let shares: Vec<String> =
            r.gates.iter().zip(&r.gate_shares).map(|(g, s)| format!("{} {:.2}", g.gate, s)).collect();
        println!("{:<10} {:>7.3} {:>28}", kind.name(), r.ir_or_inf(), shares.join("  "));
    }
    Ok(())
}
