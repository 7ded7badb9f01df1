use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("position {x} lies outside the domain of the potential")]
    OutsideDomain { x: f64 },

    #[error("trajectory {trajectory} diverged at t = {t} (x = {x}, p = {p})")]
    Diverged { trajectory: usize, t: f64, x: f64, p: f64 },

    #[error("{diverged} of {total} trajectories diverged, above the 0.1% limit")]
    TooManyDiverged { diverged: usize, total: usize },

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("mask is not simply connected ({segments} segments)")]
    DisconnectedMask { segments: usize },

    #[error("wavefunction is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("boundary amplitude {amplitude:e} above threshold {threshold:e}")]
    BoundaryAmplitude { amplitude: f64, threshold: f64 },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("requested {requested} eigenpairs but the grid resolves at most {capacity}")]
    TooManyEigenpairs { requested: usize, capacity: usize },

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
