use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input array does not have the dimensions the operation expects.
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A body model or network violates one of its structural invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("no visible joints")]
    NoVisibleJoints,
    #[error("empty point set")]
    EmptyPointSet,
    #[error("raster size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("invalid run-length encoding: {0}")]
    Rle(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
