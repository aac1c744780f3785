use thiserror::Error;

/// Errors surfaced by the format, multiplier and datapath layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid format descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("unknown format preset `{0}`")]
    UnknownPreset(String),

    #[error("input is not finite")]
    NonFiniteInput,

    #[error("lane count mismatch: mode takes {expected} lanes, got {got}")]
    LaneMismatch { expected: usize, got: usize },

    #[error("operand length mismatch: x has {x} elements, w has {w}")]
    OperandLength { x: usize, w: usize },

    #[error("block length mismatch: format blocks hold {expected} elements, got {got}")]
    BlockLength { expected: usize, got: usize },

    #[error("format mismatch: expected {expected}, got {got}")]
    FormatMismatch { expected: String, got: String },

    #[error("mode {mode}: {problem}")]
    ModeInput { mode: String, problem: String },

    #[error("unsupported lane count {0}: the unit runs 4 or 16 lanes")]
    InvalidLanes(u32),

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),
}
