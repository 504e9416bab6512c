use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty interior: no node has all axis neighbours inside the domain")]
    EmptyInterior,

    #[error("conjugate gradient failed after {iterations} iterations (relative residual {residual:.3e}): {reason}")]
    LinearSolve {
        iterations: usize,
        residual: f64,
        reason: &'static str,
    },

    #[error("eigensolver did not converge in {iterations} iterations (lambda {lambda:.10e}, residual {residual:.3e})")]
    EigenNotConverged {
        lambda: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("no positive principal eigenvalue: weight is non-positive everywhere")]
    NoPositivePrincipal,

    #[error("masks are not nested: interior of domain {index} is not contained in domain {next}")]
    NotNested { index: usize, next: usize },

    #[error("bracket violation at node {node} in step {step}: {detail}")]
    BracketViolation {
        node: usize,
        step: usize,
        detail: String,
    },

    #[error("monotone iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    MonotoneNotConverged { iterations: usize, residual: f64 },

    #[error("bracket construction failed: {0}")]
    BracketConstruction(String),

    #[error("lambda is a Dirichlet eigenvalue of domain {box_index} (principal shift {shift:.3e})")]
    Resonance { box_index: usize, shift: f64 },

    #[error("target unreachable on this grid; largest reached distance {reached:.6}")]
    Unreachable { reached: f64 },

    #[error("metric ball of radius {radius} is clipped by the grid box; enlarge the box")]
    BallClipped { radius: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
