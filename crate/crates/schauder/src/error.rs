//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Domain parameters fail their invariants (nonpositive radius, r_in >= r_out, ...).
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// Operation requires a domain with a boundary (torus has none).
    #[error("domain has no boundary")]
    NoBoundary,

    /// Operation does not support this domain kind or grid mode.
    #[error("unsupported domain or grid for this operation: {0}")]
    Unsupported(String),

    /// A numeric argument is outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Grid too coarse for the requested operation.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    /// Linear system is singular or numerically indefinite; for operators with
    /// c > 0 this typically signals an eigenvalue crossing along the homotopy.
    #[error("singular linear system (eigenvalue crossing?): {0}")]
    EigenvalueCrossing(String),

    /// Contraction or Newton iteration failed to converge.
    #[error("iteration failed: {0}")]
    IterationFailed(String),

    /// Sub/supersolution pair is not ordered or loses ordering during iteration.
    #[error("not an ordered pair: {0}")]
    NotOrderedPair(String),

    /// Periodic seam mismatch in supposedly periodic data.
    #[error("periodic seam mismatch: {0}")]
    SeamMismatch(String),

    /// Config text failed to parse.
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    /// Expression failed to parse or uses a non-whitelisted symbol.
    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T> = std::result::Result<T, Error>;
