//! Singular values of the temporal Jacobians of freshly initialized cells.
//!
//! `cargo run --release --example spectrum_at_init`

use jacprune::analysis::{spectrum_scan, ScanOptions};
use jacprune::cells::{initialize, Arch, CellSpec, InitScheme};
use jacprune::data::{sample_approx, ApproxDistribution};

fn main() -> anyhow::Result<()> {
    let batch = sample_approx(&ApproxDistribution { mean: 0.0, std: 1.0, seq_len: 12, dim: 8 }, 16, 0)?;
    let opts = ScanOptions::default();
    println!("{:<14} {:>10} {:>10} {:>8}", "arch", "mean σ", "near 0", "χ");
    for arch in Arch::ALL {
        let spec = CellSpec::new(arch, 8, 32)?;
        let params = initialize(&spec, InitScheme::SMALL_NORMAL, 0)?;
        let s = spectrum_scan(&spec, params.theta(), &batch, &opts)?.summary;
        println!("{:<14} {:>10.4} {:>9.1}% {:>8.4}", format!("{arch:?}"), s.mean_sigma, 100.0 * s.frac_near_zero, s.chi);
    }
    Ok(())
}
