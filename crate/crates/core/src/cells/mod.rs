//! Recurrent cells: vanilla RNN, LSTM, peephole LSTM and GRU over one flat
//! parameter vector with a frozen, labeled layout.
//!
//! Cell equations (`x` input row, `h`/`c` previous state, `σ` logistic):
//!
//! * RNN: `h' = tanh(x Wx + h Wh + b)` (identity activation available for tests)
//! * GRU: `z = σ(x Wxz + h Whz + bz)`, `r = σ(x Wxr + h Whr + br)`,
//!   `n = tanh(x Wxn + (r ⊙ h) Whn + bn)`, `h' = (1 − z) ⊙ h + z ⊙ n`
//! * LSTM: `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`
//! * Peephole LSTM: as LSTM with diagonal peepholes `p_i ⊙ c` and `p_f ⊙ c`
//!   added to the input and forget gates and `p_o ⊙ c'` to the output gate.

mod init;
mod layout;
mod params;
mod step;

pub use init::{initialize, InitScheme};
pub use layout::{Block, BlockKind, Layout, Role, LAYOUT_VERSION};
pub use params::{MaskedParameterSet, ParamFileHeader};
pub use step::{
    bind, step, step_traced, temporal_jacobian, temporal_jacobians, unroll, unroll_traced, CellWeights,
    GateWeights, HiddenState, StateVars,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Rnn,
    Lstm,
    PeepholeLstm,
    Gru,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Rnn, Arch::Lstm, Arch::PeepholeLstm, Arch::Gru];

    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            Arch::Rnn => &["cell"],
            Arch::Gru => &["update", "reset", "candidate"],
            Arch::Lstm | Arch::PeepholeLstm => &["input", "forget", "cell", "output"],
        }
    }

    pub fn num_gates(self) -> usize {
        self.gate_names().len()
    }

    /// Whether gate `g` carries a diagonal peephole from the cell state.
    pub fn has_peephole(self, gate: usize) -> bool {
        self == Arch::PeepholeLstm && gate != 2
    }

    pub fn has_cell_state(self) -> bool {
        matches!(self, Arch::Lstm | Arch::PeepholeLstm)
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rnn" => Ok(Arch::Rnn),
            "lstm" => Ok(Arch::Lstm),
            "peephole_lstm" => Ok(Arch::PeepholeLstm),
            "gru" => Ok(Arch::Gru),
            other => Err(Error::invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear vanilla RNN; only meaningful for [`Arch::Rnn`].
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl CellSpec {
    pub fn new(arch: Arch, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let spec = CellSpec { arch, input_dim, hidden_dim, activation: Activation::Tanh };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear_rnn(input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let mut spec = CellSpec::new(Arch::Rnn, input_dim, hidden_dim)?;
        spec.activation = Activation::Identity;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid(format!(
                "cell dims must be positive, got input_dim={} hidden_dim={}",
                self.input_dim, self.hidden_dim
            )));
        }
        if self.activation == Activation::Identity && self.arch != Arch::Rnn {
            return Err(Error::invalid("identity activation is only defined for the vanilla RNN"));
        }
        Ok(())
    }

    /// Recurrent-layer parameter count: `G·(D·N + N·N + N)` plus `3N`
    /// peephole weights for the peephole LSTM.
    pub fn param_count(&self) -> usize {
        let (d, n) = (self.input_dim, self.hidden_dim);
        let g = self.arch.num_gates();
        let peep = if self.arch == Arch::PeepholeLstm { 3 * n } else { 0 };
        g * (d * n + n * n + n) + peep
    }

    pub fn layout(&self) -> Layout {
        Layout::new(*self)
    }
}
