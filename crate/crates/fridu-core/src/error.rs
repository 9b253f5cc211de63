//! Error type shared across the crate.

/// Errors produced anywhere in the refinement stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A mesh, descriptor, or correspondence file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// Input violated a structural invariant (degenerate face, multiple
    /// components, out-of-range index, zero descriptor column, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// Operand dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A vertex or landmark index is out of range.
    #[error("index out of range: {0}")]
    Index(String),
    /// An iterative solver failed to converge.
    #[error("solver failed: {0}")]
    Solver(String),
    /// The descriptor Gram system is rank-deficient and unregularized.
    #[error("singular system: {0}")]
    SingularSystem(String),
    /// A training set contained no examples.
    #[error("empty dataset")]
    EmptyDataset,
    /// All training targets are identical; the value scale is undefined.
    #[error("degenerate dataset scale: {0}")]
    ScaleDegenerate(String),
    /// The training loss became non-finite.
    #[error("training diverged: {0}")]
    Divergence(String),
    /// A sampled or computed quantity became non-finite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Inconsistent or unsupported configuration.
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
