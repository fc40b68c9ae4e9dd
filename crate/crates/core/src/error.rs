use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix data has {len} entries, which is not dim² for dim {dim}")]
    BadShape { dim: usize, len: usize },

    #[error("operator is not Hermitian (‖A − A†‖₂ = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is {trace}, expected 1")]
    NotUnitTrace { trace: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("Bloch vector norm {norm} exceeds 1")]
    BlochOutOfBall { norm: f64 },

    #[error("site {site} out of range 1..={n_sites}")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("pair operator sites must differ, got ({0}, {0})")]
    SiteCollision(usize),

    #[error("dimension {dim} is not a power of the site dimension {site_dim}")]
    NotPowerOfDim { dim: usize, site_dim: usize },

    #[error("expected {expected} control values, got {found}")]
    ControlCountMismatch { expected: usize, found: usize },

    #[error("expected {expected} noise increments, got {found}")]
    NoiseCountMismatch { expected: usize, found: usize },

    #[error(
        "integration blew up at t = {time} (min eigenvalue {min_eigenvalue:e}); try a smaller dt"
    )]
    IntegrationBlowup { time: f64, min_eigenvalue: f64 },

    #[error("{n_sites} sites requested, at most {max} supported")]
    TooManySites { n_sites: usize, max: usize },

    #[error("direction must be traceless and Hermitian (|tr| = {trace:e})")]
    NonTracelessDirection { trace: f64 },

    #[error("Picard iteration did not converge in {} iterations (last residual {:e})", residuals.len(), residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { residuals: Vec<f64> },

    #[error("fit window contains values ≤ 1e-12 at t = {time}; shrink the window")]
    DegenerateFitWindow { time: f64 },

    #[error("Monte Carlo budget exceeded: {requested} trajectories > cap {cap}")]
    BudgetExceeded { requested: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
