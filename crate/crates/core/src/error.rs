use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    /// An argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The finite-difference oracle hit a non-finite function value.
    #[error("finite-difference oracle failed at coordinate {coordinate}")]
    Oracle { coordinate: usize },

    /// A reference video produced no proposals.
    #[error("reference video has no proposals")]
    NoProposals,

    /// Inconsistent internal state, e.g. cached intermediates that do not match the batch.
    #[error("internal state: {0}")]
    State(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}
