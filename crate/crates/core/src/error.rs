use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum PsiError {
    /// Two sequences that must line up (elements, volumes, DOFs) do not.
    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Degenerate or otherwise invalid geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The model cannot be solved as posed (rigid-body modes, conflicting BCs).
    #[error("modeling error: {0}")]
    Modeling(String),

    /// A problem, results or weight file failed to parse or validate.
    #[error("{path}: {message}")]
    Input { path: String, message: String },

    /// A constitutive law was given parameters outside its domain.
    #[error("invalid material: {0}")]
    Material(String),

    /// Weight file layers do not chain or have the wrong shape.
    #[error("invalid weight file: {0}")]
    Weights(String),

    /// Invalid solver configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The per-element projection onto the constitutive law did not converge.
    #[error("projection onto the law did not converge for element {element} (last iterate {last_iterate:e})")]
    ProjectionNonConvergence { element: usize, last_iterate: f64 },

    /// A linear solve failed (matrix not SPD after assembly).
    #[error("linear solver failure: {0}")]
    Linear(String),

    /// Rate estimation preconditions not met.
    #[error("rate estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PsiError>;
