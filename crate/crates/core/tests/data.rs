use std::path::PathBuf;

use jacprune::data::{load_mnist, parse_idx, sample_approx, ApproxDistribution, IdxArray, Split};
use sha2::{Digest, Sha256};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k")
}

#[test]
fn bundled_mnist_loads_as_28_step_sequences() {
    let (ds, manifest) = load_mnist(&fixture()).unwrap();
    assert_eq!((ds.len(), ds.seq_len, ds.dim), (10_000, 28, 28));
    assert_eq!(ds.num_classes(), Some(10));
    let labels = ds.labels().unwrap();
    assert!(labels.iter().all(|&l| l < 10));
    for c in 0..10 {
        assert!(labels.iter().filter(|&&l| l == c).count() > 800, "class {c} underrepresented");
    }
    assert!(ds.inputs.iter().all(|&x| (0.0..=1.0).contains(&x)));
    assert_eq!(manifest.files.len(), 2);
    for f in &manifest.files {
        let bytes = std::fs::read(&f.path).unwrap();
        assert_eq!(f.bytes, bytes.len() as u64);
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f.sha256, hex);
    }
}

#[test]
fn holdout_split_of_the_fixture() {
    let (ds, _) = load_mnist(&fixture()).unwrap();
    let (train, val) = ds.head(1000).split_holdout(200).unwrap();
    assert_eq!((train.len(), val.len()), (800, 200));
    assert_eq!(train.split, Split::Train);
    assert_eq!(val.split, Split::Validation);
    assert_eq!(val.sequence(0), ds.sequence(800));
    assert_eq!(train.sequence(799), ds.sequence(799));
}

#[test]
fn encoded_idx_round_trips_through_the_parser() {
    let arr = IdxArray { dims: vec![2, 3, 3], data: (0..18).map(|i| (i * 14) as u8).collect() };
    let back = parse_idx(&arr.encode()).unwrap();
    assert_eq!(back, arr);
    let unit = back.to_unit_f64();
    assert_eq!(unit[1], 14.0 / 255.0);
}

#[test]
fn approx_mean_over_a_million_draws_is_near_zero() {
    let dist = ApproxDistribution { mean: 0.0, std: 0.1, seq_len: 100, dim: 100 };
    let batch = sample_approx(&dist, 100, 17).unwrap();
    let xs: Vec<f64> = batch.xs.iter().flat_map(|t| t.data().iter().copied()).collect();
    assert_eq!(xs.len(), 1_000_000);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    // 0.1 / sqrt(1e6) = 1e-4, so 0.001 is a 10σ bound.
    assert!(mean.abs() < 1e-3, "{mean}");
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    assert!((std - 0.1).abs() < 0.002, "{std}");
}
