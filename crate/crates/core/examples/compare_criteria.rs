//! Runs the prune → train → evaluate grid from a config file and prints the table.
//!
//! `cargo run --release --example compare_criteria`

use std::path::PathBuf;

use jacprune::criteria::CriterionKind;
use jacprune::pipeline::{cmd_compare, load_config, Overrides};

fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic_gru8.toml");
    let out = tempfile::tempdir()?;
    let cfg = load_config(&path, &Overrides { out_dir: Some(out.path().to_path_buf()), ..Default::default() })?;
    let criteria = [CriterionKind::Jacobian, CriterionKind::Snip, CriterionKind::Random];
    let summary = cmd_compare(&cfg, &criteria, &[0, 1])?;
    for r in &summary.rows {
        println!("{:<10} {} runs  {}", r.criterion, r.runs, r.display);
    }
    println!("{}", std::fs::read_to_string(out.path().join("summary.csv"))?);
    Ok(())
}
