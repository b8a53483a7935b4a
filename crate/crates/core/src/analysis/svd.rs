use jacprune_autodiff::Tensor;

use crate::error::{Error, Result};

/// Largest matrix side accepted by [`svd_small`].
pub const SVD_MAX_DIM: usize = 1024;
const MAX_SWEEPS: usize = 60;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Svd {
    /// Descending, non-negative.
    pub sigma: Vec<f64>,
    /// Right singular vectors as columns of an `[n, n]` matrix, same order as `sigma`.
    pub v: Tensor,
    pub sweeps: usize,
    /// `‖AᵀA − V Σ² Vᵀ‖_F / ‖A‖_F²`.
    pub residual: f64,
}

/// One-sided Jacobi SVD of a square matrix.
pub fn svd_small(a: &Tensor) -> Result<Svd> {
    let (m, n) = a.dims2();
    if m != n {
        return Err(Error::invalid(format!("svd_small expects a square matrix, got {m}x{n}")));
    }
    if n > SVD_MAX_DIM {
        return Err(Error::invalid(format!("svd_small is capped at {SVD_MAX_DIM}, got {n}")));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("non-finite entry in svd_small input".into()));
    }
    // Work on columns: u[j] is column j of A·V as it is rotated.
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| a.at2(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (up, uq) = (&u[p], &u[q]);
                    let mut s = (0.0, 0.0, 0.0);
                    for k in 0..n {
                        s.0 += up[k] * up[k];
                        s.1 += uq[k] * uq[k];
                        s.2 += up[k] * uq[k];
                    }
                    s
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut u, &mut v] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, yq) = (*x, *y);
                        *x = c * xp - s * yq;
                        *y = s * xp + c * yq;
                    }
                }
            }
        }
        sweeps += 1;
        if !rotated {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> =
        u.iter().enumerate().map(|(j, col)| (col.iter().map(|x| x * x).sum::<f64>().sqrt(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let sigma: Vec<f64> = order.iter().map(|&(s, _)| s).collect();
    let mut vm = Tensor::zeros(&[n, n]);
    for (k, &(_, j)) in order.iter().enumerate() {
        for i in 0..n {
            vm.data_mut()[i * n + k] = v[j][i];
        }
    }
    let residual = gram_residual(a, &vm, &sigma);
    if residual >= RESIDUAL_TOL {
        return Err(Error::Numeric(format!(
            "Jacobi SVD did not converge after {sweeps} sweeps (residual {residual:e})"
        )));
    }
    Ok(Svd { sigma, v: vm, sweeps, residual })
}

fn gram_residual(a: &Tensor, v: &Tensor, sigma: &[f64]) -> f64 {
    let n = sigma.len();
    let norm = a.norm_sq();
    if norm == 0.0 {
        return 0.0;
    }
    let ata = a.transpose().matmul(a);
    let mut vs = v.clone();
    for i in 0..n {
        for k in 0..n {
            vs.data_mut()[i * n + k] *= sigma[k] * sigma[k];
        }
    }
    let recon = vs.matmul(&v.transpose());
    ata.sub(&recon).norm_sq().sqrt() / norm
}
