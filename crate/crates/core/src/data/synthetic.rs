use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{SequenceDataset, Split, Targets};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Noise everywhere except the last step, which carries a class
    /// prototype plus small noise. Linearly separable from the last input.
    LastStepClass,
    /// One-hot symbols over the first `prefix_len` steps, blanks after, and a
    /// recall marker on the last step; the target is the prefix.
    CopyMemory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSizes {
    pub count: usize,
    pub seq_len: usize,
    pub dim: usize,
    /// Classes for `LastStepClass`, vocabulary size for `CopyMemory`.
    pub classes: usize,
    #[serde(default)]
    pub prefix_len: usize,
}

const NOISE_STD: f64 = 0.5;
const LAST_STEP_NOISE_STD: f64 = 0.1;

pub fn synthetic_task(kind: SyntheticKind, sizes: SyntheticSizes, seed: u64) -> Result<SequenceDataset> {
    let SyntheticSizes { count, seq_len: s, dim: d, classes, prefix_len } = sizes;
    if count == 0 || s == 0 || d == 0 || classes < 2 {
        return Err(Error::invalid(format!("degenerate synthetic sizes {sizes:?}")));
    }
    let mut rng = stream(seed, Stream::Synthetic);
    let mut inputs = vec![0.0; count * s * d];
    match kind {
        SyntheticKind::LastStepClass => {
            if classes > 1 << d.min(20) {
                return Err(Error::invalid(format!("{classes} classes cannot have distinct ±1 prototypes in {d} dims")));
            }
            let mut protos: Vec<Vec<f64>> = Vec::with_capacity(classes);
            while protos.len() < classes {
                let p: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                if !protos.contains(&p) {
                    protos.push(p);
                }
            }
            let noise = Normal::new(0.0, NOISE_STD).expect("positive std");
            let last = Normal::new(0.0, LAST_STEP_NOISE_STD).expect("positive std");
            let mut labels = Vec::with_capacity(count);
            for seq in inputs.chunks_exact_mut(s * d) {
                let c = rng.random_range(0..classes);
                labels.push(c);
                let (body, tail) = seq.split_at_mut((s - 1) * d);
                body.iter_mut().for_each(|x| *x = noise.sample(&mut rng));
                for (x, p) in tail.iter_mut().zip(&protos[c]) {
                    *x = p + last.sample(&mut rng);
                }
            }
            Ok(SequenceDataset {
                seq_len: s,
                dim: d,
                inputs,
                targets: Targets::Class { labels, num_classes: classes },
                split: Split::Synthetic,
                scale: 1.0,
            })
        }
        SyntheticKind::CopyMemory => {
            if prefix_len == 0 || prefix_len >= s || classes + 1 > d {
                return Err(Error::invalid(format!(
                    "copy-memory needs 0 < prefix_len < seq_len and dim > vocab, got {sizes:?}"
                )));
            }
            let mut tokens = Vec::with_capacity(count);
            for seq in inputs.chunks_exact_mut(s * d) {
                let prefix: Vec<usize> = (0..prefix_len).map(|_| rng.random_range(0..classes)).collect();
                for (t, &sym) in prefix.iter().enumerate() {
                    seq[t * d + sym] = 1.0;
                }
                seq[(s - 1) * d + d - 1] = 1.0;
                tokens.push(prefix);
            }
            Ok(SequenceDataset {
                seq_len: s,
                dim: d,
                inputs,
                targets: Targets::Sequence { tokens, vocab: classes },
                split: Split::Synthetic,
                scale: 1.0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sha256_hex;

    fn sizes(count: usize) -> SyntheticSizes {
        SyntheticSizes { count, seq_len: 6, dim: 4, classes: 2, prefix_len: 2 }
    }

    fn bytes(xs: &[f64]) -> Vec<u8> {
        xs.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn fixed_seed_fixed_first_sequence() {
        let a = synthetic_task(SyntheticKind::LastStepClass, sizes(3), 11).unwrap();
        let b = synthetic_task(SyntheticKind::LastStepClass, sizes(3), 11).unwrap();
        assert_eq!(sha256_hex(&bytes(a.sequence(0))), sha256_hex(&bytes(b.sequence(0))));
        let c = synthetic_task(SyntheticKind::LastStepClass, sizes(3), 12).unwrap();
        assert_ne!(a.sequence(0), c.sequence(0));
    }

    #[test]
    fn class_balance_within_binomial_bounds() {
        let m = 4000;
        let ds = synthetic_task(SyntheticKind::LastStepClass, sizes(m), 3).unwrap();
        let ones = ds.labels().unwrap().iter().filter(|&&l| l == 1).count() as f64;
        // Binomial(m, 1/2): mean m/2, std sqrt(m)/2.
        let sigma = (m as f64).sqrt() / 2.0;
        assert!((ones - m as f64 / 2.0).abs() < 3.0 * sigma, "{ones}");
    }

    #[test]
    fn copy_memory_target_is_input_prefix() {
        let ds = synthetic_task(SyntheticKind::CopyMemory, SyntheticSizes { classes: 3, ..sizes(20) }, 5).unwrap();
        let Targets::Sequence { tokens, .. } = &ds.targets else { panic!("sequence targets") };
        for (i, toks) in tokens.iter().enumerate() {
            let seq = ds.sequence(i);
            for (t, &sym) in toks.iter().enumerate() {
                let row = &seq[t * 4..(t + 1) * 4];
                assert_eq!(row.iter().position(|&x| x == 1.0), Some(sym));
            }
            assert_eq!(seq[5 * 4 + 3], 1.0);
        }
    }

    #[test]
    fn last_step_is_near_a_prototype() {
        let ds = synthetic_task(SyntheticKind::LastStepClass, sizes(50), 9).unwrap();
        for i in 0..ds.len() {
            let last = &ds.sequence(i)[5 * 4..];
            assert!(last.iter().all(|x| (x.abs() - 1.0).abs() < 0.6));
        }
    }
}
