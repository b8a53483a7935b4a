//! Loads the bundled MNIST subset as 28-step sequences of 28 pixels.
//!
//! `cargo run --release --example mnist_idx [dir]`

use std::path::PathBuf;

use jacprune::data::{load_mnist, resolve_root};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| resolve_root(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k")));
    let dir = dir.canonicalize().unwrap_or(dir);
    let (data, manifest) = load_mnist(&dir)?;
    println!("{} sequences of {} × {}", data.len(), data.seq_len, data.dim);
    for f in &manifest.files {
        println!("{:<28} {}", f.path.display(), f.sha256);
    }
    let labels = data.labels().unwrap_or_default();
    let mut counts = [0usize; 10];
    for &l in labels {
        counts[l] += 1;
    }
    println!("label counts {counts:?}");
    let (tr, val) = data.split_holdout(2000)?;
    println!("train {} / validation {}", tr.len(), val.len());
    Ok(())
}
