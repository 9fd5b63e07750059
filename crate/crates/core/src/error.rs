use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("adaptive quadrature did not converge: estimated error {estimate:.3e} above tolerance {tolerance:.3e}")]
    NoConvergence { estimate: f64, tolerance: f64 },

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("basis dimension {dimension} exceeds the configured cap {cap}")]
    ResourceLimit { dimension: usize, cap: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("Neumann series diverges: contraction norm {norm:.6} >= 1")]
    SeriesDivergent { norm: f64 },

    #[error("Neumann series did not reach residual {tolerance:.1e} within {terms} terms (residual {residual:.3e})")]
    SeriesTruncated { terms: usize, residual: f64, tolerance: f64 },

    #[error("singular linear system: {0}")]
    SingularSolve(String),

    #[error("degenerate numerics: {0}")]
    DegenerateNumerics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
