use thiserror::Error;

use crate::feedback::SolveTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("zero-norm argument: {0}")]
    ZeroNorm(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state matrix is not Hurwitz (max real part {max_real_part:e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("operator is not invertible: {0}")]
    NotInvertible(String),

    #[error("target {target} outside the range [{lo}, {hi}] of the inverted function")]
    OutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("degenerate input pair {index}: difference norm {norm:e} <= 1e-12")]
    DegeneratePair { index: usize, norm: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("feedback solve diverged after {} iterations", .trace.iterates)]
    Divergence { trace: Box<SolveTrace> },

    #[error("region image not representable: {0}")]
    Unrepresentable(String),

    #[error("unsupported primitive combination: {0}")]
    Unsupported(String),

    #[error("region is not conjugate-symmetric")]
    NotSymmetric,

    #[error("region is unbounded: {0}")]
    Unbounded(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing declaration: {0}")]
    MissingDeclaration(String),

    #[error("multiplier: {0}")]
    Multiplier(String),

    #[error("causality probe failed: violation {violation:e} at T = {at}")]
    CausalityViolation { violation: f64, at: f64 },

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("empirical gain {empirical} exceeds certified bound {certified}")]
    EmpiricalViolation { empirical: f64, certified: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
