use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not anti-hermitian (relative deviation {deviation:.3e})")]
    NotAntiHermitian { deviation: f64 },

    #[error("matrix is not traceless (relative trace {deviation:.3e})")]
    NotTraceless { deviation: f64 },

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("unitary matrix has determinant {re:.6}{im:+.6}i, expected 1")]
    NotSpecialUnitary { re: f64, im: f64 },

    #[error("Stiefel constraint violated: |X^dag X - 1| = {deviation:.3e}")]
    ConstraintViolation { deviation: f64 },

    #[error("jet is missing {0}")]
    MissingDerivatives(&'static str),

    #[error("degenerate metric: det G = {det:.3e} <= threshold {threshold:.3e}")]
    DegenerateMetric { det: f64, threshold: f64 },

    #[error("conjugated tangent violates block structure (relative diagonal-block norm {deviation:.3e})")]
    BlockStructure { deviation: f64 },

    #[error("Gram-Schmidt produced {found} normals, expected {expected}")]
    GramSchmidt { expected: usize, found: usize },

    #[error("normal frame is not smooth near xi = ({xi_l}, {xi_r}): pivot pattern or orientation changes")]
    FrameDiscontinuity { xi_l: f64, xi_r: f64 },

    #[error("initial data disagree at the corner (|dX| = {deviation:.3e})")]
    CornerMismatch { deviation: f64 },

    #[error("polar retraction failed at node ({i}, {j}): smallest singular value {sigma_min:.3e}")]
    RetractionFailure { i: usize, j: usize, sigma_min: f64 },

    #[error("solver diverged at node ({i}, {j}) (xi_L = {xi_l}, xi_R = {xi_r})")]
    Divergence { i: usize, j: usize, xi_l: f64, xi_r: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid basepoint ({i}, {j}) for a {n_l}x{n_r} grid")]
    InvalidBasepoint { i: usize, j: usize, n_l: usize, n_r: usize },

    #[error("certification failed for `{name}`: EL residual {residual:.3e} exceeds {tolerance:.1e}")]
    Certification { name: String, residual: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Errors that come from bad input rather than from the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::InvalidGrid(_) | Error::InvalidBasepoint { .. } | Error::InvalidDimension(_))
    }
}
