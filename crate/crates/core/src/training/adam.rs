use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("train.adam.lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("train.adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("train.adam.eps must be positive"));
        }
        Ok(())
    }
}

/// Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One bias-corrected update. Masked indices get no moment update and
    /// are set to exactly zero afterwards. A NaN gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], mask: Option<&[bool]>, cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dim { what: "Adam state", expected: self.m.len(), actual: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| g.is_nan()) {
            return Err(Error::Numeric(format!("NaN gradient at index {i}, step aborted")));
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            if mask.is_some_and(|m| !m[i]) {
                params[i] = 0.0;
                self.m[i] = 0.0;
                self.v[i] = 0.0;
                continue;
            }
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }

    /// Zeroes the moments of indices that are no longer retained.
    pub fn apply_mask(&mut self, mask: &[bool]) {
        for (i, &c) in mask.iter().enumerate() {
            if !c {
                self.m[i] = 0.0;
                self.v[i] = 0.0;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 16 * self.m.len());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&(self.m.len() as u64).to_le_bytes());
        for x in self.m.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Returns the state and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Adam, usize)> {
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes
                .get(i * 8..i * 8 + 8)
                .map(|b| b.try_into().expect("8 bytes"))
                .ok_or_else(|| Error::Parse { offset: i * 8, message: "truncated optimizer state".into() })
        };
        let t = u64::from_le_bytes(word(0)?);
        let len = u64::from_le_bytes(word(1)?) as usize;
        let mut vals = Vec::with_capacity(2 * len);
        for i in 0..2 * len {
            vals.push(f64::from_le_bytes(word(2 + i)?));
        }
        let v = vals.split_off(len);
        Ok((Adam { m: vals, v, t }, 16 + 16 * len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.5];
        let mut a = Adam::new(1);
        a.step(&mut p, &[1.0], None, &AdamConfig::default()).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = −lr · 1 / (1 + ε).
        assert!((p[0] - (0.5 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-18);
    }

    #[test]
    fn masked_index_stays_zero() {
        let mut p = vec![0.3, 0.0];
        let mut a = Adam::new(2);
        for _ in 0..5 {
            a.step(&mut p, &[1.0, 7.0], Some(&[true, false]), &AdamConfig::default()).unwrap();
        }
        assert_eq!(p[1], 0.0);
        assert_eq!((a.m[1], a.v[1]), (0.0, 0.0));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3, -0.2];
        let mut a = Adam::new(2);
        a.step(&mut p, &[0.0, 0.0], None, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.3, -0.2]);
    }

    #[test]
    fn nan_gradient_aborts_untouched() {
        let mut p = vec![0.3, -0.2];
        let mut a = Adam::new(2);
        assert!(a.step(&mut p, &[0.1, f64::NAN], None, &AdamConfig::default()).is_err());
        assert_eq!(p, vec![0.3, -0.2]);
        assert_eq!(a, Adam::new(2));
    }

    #[test]
    fn bytes_round_trip() {
        let mut a = Adam::new(3);
        a.step(&mut [1.0, 2.0, 3.0], &[0.1, 0.2, 0.3], None, &AdamConfig::default()).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(Adam::from_bytes(&bytes).unwrap(), (a, bytes.len()));
    }
}
