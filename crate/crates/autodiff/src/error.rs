use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("differentiated output must be a scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("argument {index}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        index: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("expected {expected} arguments, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },
    #[error("derivative nesting too deep: output already has derivative order {0}")]
    NestingTooDeep(u8),
}
