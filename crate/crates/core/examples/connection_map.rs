//! Exports a pruned LSTM's retained connections as a CSV map and reads it back.
//!
//! `cargo run --release --example connection_map`

use jacprune::analysis::{connection_map_export, connection_map_import, connectivity_stats};
use jacprune::cells::{initialize, Arch, CellSpec, InitScheme};
use jacprune::criteria::{mask_for, magnitude_score, CriterionConfig};

fn main() -> anyhow::Result<()> {
    let spec = CellSpec::new(Arch::Lstm, 3, 4)?;
    let params = initialize(&spec, InitScheme::Glorot, 5)?;
    let cfg = CriterionConfig { prune_biases: false, ..Default::default() };
    let mask = mask_for(&magnitude_score(params.theta(), &cfg), &spec, 0.7)?;
    let layout = spec.layout();

    let csv = connection_map_export(&mask, &layout)?;
    print!("{csv}");
    let back = connection_map_import(&csv, &layout)?;
    let report = connectivity_stats(&mask, &layout)?;
    println!(
        "{} retained: {} input, {} recurrent, {} bias; {} weights listed",
        report.retained,
        report.input,
        report.recurrent,
        report.bias,
        back.iter().filter(|&&c| c).count()
    );
    Ok(())
}
