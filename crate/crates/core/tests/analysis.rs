use jacprune::analysis::{
    connection_map_export, connection_map_import, connectivity_stats, spectrum_scan, svd_small, ScanOptions,
};
use jacprune::cells::{initialize, Arch, CellSpec, InitScheme};
use jacprune::criteria::{chi_estimate, random_score, top_k_mask, CriterionConfig, Probe};
use jacprune::data::{sample_approx, ApproxDistribution};
use jacprune_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Number of eigenvalues of the symmetric matrix `m` below `lambda`, from the
/// signs of the LDLᵀ pivots of `m − λI` (Sylvester's law of inertia).
fn count_below(m: &[f64], n: usize, lambda: f64) -> usize {
    let mut a: Vec<f64> = m.to_vec();
    for i in 0..n {
        a[i * n + i] -= lambda;
    }
    let mut neg = 0;
    for k in 0..n {
        let mut p = a[k * n + k];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let f = a[i * n + k] / p;
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    neg
}

/// Eigenvalues of a symmetric PSD matrix, ascending, by bisection.
fn eigenvalues_by_bisection(m: &[f64], n: usize) -> Vec<f64> {
    let hi0 = (0..n).map(|i| (0..n).map(|j| m[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-1.0, hi0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(m, n, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

#[test]
fn svd_squares_match_brute_force_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 5, 8] {
        for _ in 0..5 {
            let a = random_matrix(&mut rng, n);
            let mut ata = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    ata[i * n + j] = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
                }
            }
            let mut eig = eigenvalues_by_bisection(&ata, n);
            eig.reverse();
            let svd = svd_small(&Tensor::matrix(n, n, a)).unwrap();
            assert!(svd.residual < 1e-10);
            for (s, e) in svd.sigma.iter().zip(&eig) {
                assert!((s * s - e).abs() < 1e-8, "n={n}: σ²={} λ={e}", s * s);
            }
        }
    }
}

#[test]
fn singular_values_are_sorted_nonnegative_and_conserve_frobenius() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [1, 3, 16, 40] {
        let a = random_matrix(&mut rng, n);
        let fro: f64 = a.iter().map(|x| x * x).sum();
        let svd = svd_small(&Tensor::matrix(n, n, a)).unwrap();
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(svd.sigma.iter().all(|&s| s >= 0.0));
        let sq: f64 = svd.sigma.iter().map(|s| s * s).sum();
        assert!((sq - fro).abs() < 1e-8 * fro.max(1.0));
    }
}

#[test]
fn linear_cell_spectrum_is_the_recurrent_matrix_spectrum_at_every_step() {
    let spec = CellSpec::linear_rnn(3, 6).unwrap();
    let params = initialize(&spec, InitScheme::SMALL_NORMAL, 4).unwrap();
    let layout = spec.layout();
    let blk = layout.find(0, jacprune::cells::Role::Recurrent, false).unwrap();
    let w = Tensor::matrix(6, 6, params.theta()[blk.offset..blk.offset + blk.len].to_vec());
    let expected = svd_small(&w).unwrap().sigma;
    let batch = sample_approx(&ApproxDistribution::small_normal(7, 3), 3, 1).unwrap();
    let report = spectrum_scan(&spec, params.theta(), &batch, &ScanOptions { horizon: 5, ..Default::default() }).unwrap();
    assert_eq!(report.entries.len(), 3 * 5);
    for e in &report.entries {
        for (a, b) in e.sigma.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn identity_recurrence_has_unit_spectrum() {
    let spec = CellSpec::linear_rnn(2, 5).unwrap();
    let mut theta = vec![0.0; spec.param_count()];
    let blk = *spec.layout().find(0, jacprune::cells::Role::Recurrent, false).unwrap();
    for i in 0..5 {
        theta[blk.offset + i * 5 + i] = 1.0;
    }
    let batch = sample_approx(&ApproxDistribution::small_normal(6, 2), 2, 0).unwrap();
    let report = spectrum_scan(&spec, &theta, &batch, &ScanOptions::default()).unwrap();
    assert!(report.entries.iter().flat_map(|e| &e.sigma).all(|&s| (s - 1.0).abs() < 1e-12));
    assert_eq!(report.summary.frac_near_zero, 0.0);
    assert!((report.summary.chi - 1.0).abs() < 1e-12);
}

#[test]
fn report_chi_equals_frobenius_chi_estimate() {
    for arch in Arch::ALL {
        let spec = CellSpec::new(arch, 3, 6).unwrap();
        let params = initialize(&spec, InitScheme::Normal { mean: 0.0, std: 0.5 }, 8).unwrap();
        let batch = sample_approx(&ApproxDistribution { mean: 0.0, std: 1.0, seq_len: 7, dim: 3 }, 4, 2).unwrap();
        let opts = ScanOptions { horizon: 3, ..Default::default() };
        let report = spectrum_scan(&spec, params.theta(), &batch, &opts).unwrap();
        let est = chi_estimate(&spec, params.theta(), &batch, 3, Probe::Frobenius).unwrap();
        assert!((report.summary.chi - est.chi).abs() < 1e-8, "{arch:?}: {} vs {}", report.summary.chi, est.chi);
    }
}

#[test]
fn scan_is_a_pure_function_and_histogram_counts_everything() {
    let spec = CellSpec::new(Arch::Gru, 3, 5).unwrap();
    let params = initialize(&spec, InitScheme::SMALL_NORMAL, 1).unwrap();
    let batch = sample_approx(&ApproxDistribution::small_normal(6, 3), 4, 3).unwrap();
    let a = spectrum_scan(&spec, params.theta(), &batch, &ScanOptions::default()).unwrap();
    let b = spectrum_scan(&spec, params.theta(), &batch, &ScanOptions::default()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.summary.histogram.counts.iter().sum::<usize>(), a.summary.count);
    assert_eq!(a.summary.count, 4 * 4 * 5);
}

#[test]
fn uniform_random_mask_spreads_across_gates_within_binomial_bounds() {
    let spec = CellSpec::new(Arch::Lstm, 8, 32).unwrap();
    let p = spec.param_count();
    let cfg = CriterionConfig { seed: 9, ..Default::default() };
    let k = p / 10;
    let mask = top_k_mask(&random_score(p, &cfg).scores, k, None).unwrap();
    let report = connectivity_stats(&mask, &spec.layout()).unwrap();
    let counted: usize = report.gates.iter().map(|g| g.total()).sum();
    assert_eq!(counted, k);
    let q = 0.25;
    let sd = (k as f64 * q * (1.0 - q)).sqrt();
    for g in &report.gates {
        assert!((g.total() as f64 - k as f64 * q).abs() < 3.0 * sd, "{g:?}");
    }
}

#[test]
fn connection_map_round_trips_a_sparse_mask() {
    for arch in Arch::ALL {
        let spec = CellSpec::new(arch, 4, 6).unwrap();
        let p = spec.param_count();
        let layout = spec.layout();
        let cfg = CriterionConfig { seed: 3, ..Default::default() };
        let mut mask = top_k_mask(&random_score(p, &cfg).scores, p / 3, None).unwrap();
        // Non-matrix entries are not part of the map.
        for b in &layout.blocks {
            if !matches!(b.kind, jacprune::cells::BlockKind::Matrix { .. }) {
                mask[b.offset..b.offset + b.len].fill(false);
            }
        }
        let csv = connection_map_export(&mask, &layout).unwrap();
        assert_eq!(csv.lines().count() - 1, mask.iter().filter(|&&c| c).count());
        assert_eq!(connection_map_import(&csv, &layout).unwrap(), mask);
    }
}

#[test]
fn counts_are_conserved_for_any_mask() {
    let spec = CellSpec::new(Arch::PeepholeLstm, 3, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let mask: Vec<bool> = (0..spec.param_count()).map(|_| rng.random_bool(0.3)).collect();
        let r = connectivity_stats(&mask, &spec.layout()).unwrap();
        assert_eq!(r.input + r.recurrent + r.bias, r.retained);
        assert_eq!(r.retained, mask.iter().filter(|&&c| c).count());
    }
}
