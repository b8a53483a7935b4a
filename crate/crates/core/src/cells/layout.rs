use serde::{Deserialize, Serialize};

use super::CellSpec;

/// Bumped whenever the flattening order below changes.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    Recurrent,
    Bias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Row-major `[rows, cols]`; rows index the source, cols the hidden unit.
    Matrix { rows: usize, cols: usize },
    /// Diagonal peephole weights from the cell state, one per unit.
    Diagonal,
    Vector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub gate: usize,
    pub role: Role,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

/// Flattening order, per gate in [`super::Arch::gate_names`] order:
/// input matrix `[D, N]`, recurrent matrix `[N, N]`, peephole `[N]` (peephole
/// LSTM gates input/forget/output only), bias `[N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub spec: CellSpec,
    pub blocks: Vec<Block>,
}

impl Layout {
    pub fn new(spec: CellSpec) -> Self {
        let (d, n) = (spec.input_dim, spec.hidden_dim);
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |gate, role, kind, len| {
            blocks.push(Block { gate, role, kind, offset, len });
            offset += len;
        };
        for gate in 0..spec.arch.num_gates() {
            push(gate, Role::Input, BlockKind::Matrix { rows: d, cols: n }, d * n);
            push(gate, Role::Recurrent, BlockKind::Matrix { rows: n, cols: n }, n * n);
            if spec.arch.has_peephole(gate) {
                push(gate, Role::Recurrent, BlockKind::Diagonal, n);
            }
            push(gate, Role::Bias, BlockKind::Vector, n);
        }
        Layout { spec, blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_gates(&self) -> usize {
        self.spec.arch.num_gates()
    }

    pub fn gate_names(&self) -> &'static [&'static str] {
        self.spec.arch.gate_names()
    }

    pub fn find(&self, gate: usize, role: Role, diagonal: bool) -> Option<&Block> {
        self.blocks.iter().find(|b| {
            b.gate == gate && b.role == role && matches!(b.kind, BlockKind::Diagonal) == diagonal
        })
    }

    /// `(gate, role)` for every flat index.
    pub fn labels(&self) -> Vec<(usize, Role)> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.blocks {
            out.extend(std::iter::repeat_n((b.gate, b.role), b.len));
        }
        out
    }

    pub fn bias_indices(&self) -> Vec<bool> {
        self.labels().iter().map(|&(_, r)| r == Role::Bias).collect()
    }

    /// Number of entries belonging to input or recurrent weight matrices.
    pub fn matrix_len(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b.kind, BlockKind::Matrix { .. }))
            .map(|b| b.len)
            .sum()
    }
}
