use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cells::{BlockKind, Layout, Role};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCounts {
    pub gate: String,
    pub input: usize,
    pub recurrent: usize,
    pub bias: usize,
}

impl GateCounts {
    pub fn total(&self) -> usize {
        self.input + self.recurrent + self.bias
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub gates: Vec<GateCounts>,
    pub retained: usize,
    pub input: usize,
    pub recurrent: usize,
    pub bias: usize,
    /// Retained input weights over retained recurrent weights (peepholes count
    /// as recurrent). `None` when no recurrent weight survives.
    pub ir_ratio: Option<f64>,
    pub no_recurrent: bool,
    /// Per-gate fraction of all retained parameters.
    pub gate_shares: Vec<f64>,
}

impl ConnectivityReport {
    pub fn max_gate_share(&self) -> f64 {
        self.gate_shares.iter().cloned().fold(0.0, f64::max)
    }

    /// I/R ratio with `+∞` standing in for an empty recurrent set.
    pub fn ir_or_inf(&self) -> f64 {
        self.ir_ratio.unwrap_or(f64::INFINITY)
    }
}

pub fn connectivity_stats(mask: &[bool], layout: &Layout) -> Result<ConnectivityReport> {
    if mask.len() != layout.len() {
        return Err(Error::Dim { what: "mask", expected: layout.len(), actual: mask.len() });
    }
    let mut gates: Vec<GateCounts> = layout
        .gate_names()
        .iter()
        .map(|g| GateCounts { gate: g.to_string(), input: 0, recurrent: 0, bias: 0 })
        .collect();
    for b in &layout.blocks {
        let kept = mask[b.offset..b.offset + b.len].iter().filter(|&&c| c).count();
        let g = &mut gates[b.gate];
        match b.role {
            Role::Input => g.input += kept,
            Role::Recurrent => g.recurrent += kept,
            Role::Bias => g.bias += kept,
        }
    }
    let input = gates.iter().map(|g| g.input).sum();
    let recurrent: usize = gates.iter().map(|g| g.recurrent).sum();
    let bias = gates.iter().map(|g| g.bias).sum();
    let retained = mask.iter().filter(|&&c| c).count();
    let gate_shares = gates
        .iter()
        .map(|g| if retained == 0 { 0.0 } else { g.total() as f64 / retained as f64 })
        .collect();
    Ok(ConnectivityReport {
        gates,
        retained,
        input,
        recurrent,
        bias,
        ir_ratio: (recurrent > 0).then(|| input as f64 / recurrent as f64),
        no_recurrent: recurrent == 0,
        gate_shares,
    })
}

/// Retained weight-matrix entries as `row,col,gate` lines. Rows `0..D` are
/// inputs and `D..D+N` recurrent source units; `col = gate·N + unit`.
/// Biases and peepholes are not matrix entries and are omitted.
pub fn connection_map_export(mask: &[bool], layout: &Layout) -> Result<String> {
    if mask.len() != layout.len() {
        return Err(Error::Dim { what: "mask", expected: layout.len(), actual: mask.len() });
    }
    let (d, n) = (layout.spec.input_dim, layout.spec.hidden_dim);
    let mut out = String::from("row,col,gate\n");
    for b in &layout.blocks {
        let BlockKind::Matrix { cols, .. } = b.kind else { continue };
        let row0 = if b.role == Role::Input { 0 } else { d };
        for k in 0..b.len {
            if mask[b.offset + k] {
                let _ = writeln!(out, "{},{},{}", row0 + k / cols, b.gate * n + k % cols, b.gate);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`connection_map_export`]; non-matrix entries come back unset.
/// Leading `#` comment lines are skipped.
pub fn connection_map_import(csv: &str, layout: &Layout) -> Result<Vec<bool>> {
    let (d, n) = (layout.spec.input_dim, layout.spec.hidden_dim);
    let mut mask = vec![false; layout.len()];
    let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
    if lines.next() != Some("row,col,gate") {
        return Err(Error::Parse { offset: 0, message: "missing `row,col,gate` header".into() });
    }
    for (ln, line) in lines.enumerate() {
        let bad = |m: &str| Error::Parse { offset: ln + 2, message: format!("line {}: {m}", ln + 2) };
        let f: Vec<usize> = line
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        let [row, col, gate] = f[..] else { return Err(bad("expected three fields")) };
        if gate >= layout.num_gates() || col / n != gate || row >= d + n {
            return Err(bad("coordinate out of range"));
        }
        let role = if row < d { Role::Input } else { Role::Recurrent };
        let blk = layout.find(gate, role, false).expect("every gate has both matrices");
        let r = if row < d { row } else { row - d };
        mask[blk.offset + r * n + col % n] = true;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{Arch, CellSpec};

    #[test]
    fn dense_gru_ratio_at_full_scale() {
        let layout = CellSpec::new(Arch::Gru, 28, 400).unwrap().layout();
        let r = connectivity_stats(&vec![true; layout.len()], &layout).unwrap();
        assert_eq!(r.ir_ratio, Some(0.07));
        assert_eq!(r.input + r.recurrent + r.bias, r.retained);
    }

    #[test]
    fn input_only_mask_flags_missing_recurrence() {
        let layout = CellSpec::new(Arch::Lstm, 3, 4).unwrap().layout();
        let mask: Vec<bool> = layout.labels().iter().map(|&(_, r)| r == Role::Input).collect();
        let r = connectivity_stats(&mask, &layout).unwrap();
        assert!(r.no_recurrent && r.ir_ratio.is_none() && r.ir_or_inf().is_infinite());
    }

    #[test]
    fn empty_and_full_maps() {
        let layout = CellSpec::new(Arch::PeepholeLstm, 2, 3).unwrap().layout();
        assert_eq!(connection_map_export(&vec![false; layout.len()], &layout).unwrap(), "row,col,gate\n");
        let full = connection_map_export(&vec![true; layout.len()], &layout).unwrap();
        assert_eq!(full.lines().count() - 1, layout.matrix_len());
    }

    #[test]
    fn map_round_trip() {
        let layout = CellSpec::new(Arch::Gru, 3, 5).unwrap().layout();
        let labels = layout.labels();
        let mask: Vec<bool> = (0..layout.len()).map(|i| labels[i].1 != Role::Bias && (i * 31) % 7 < 3).collect();
        let back = connection_map_import(&connection_map_export(&mask, &layout).unwrap(), &layout).unwrap();
        assert_eq!(back, mask);
    }
}
