use thiserror::Error;

/// Failure modes shared by every solver stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function (negative `x`, pole).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller supplied an argument that violates a precondition (empty range, bad index).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Flux position unusable for the given boundary (outside, too close, coincident).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Boundary parameters produce a self-intersecting curve.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Requested null vector at a wavenumber that is not a level.
    #[error("not an eigenvalue: k = {k}, smallest singular value {sigma_min:e}")]
    NotAnEigenvalue { k: f64, sigma_min: f64 },

    /// The number of levels inside a k-window changed while tracking.
    #[error("level window error: {0}")]
    Window(String),

    /// A level crossing sits inside a finite-difference stencil.
    #[error("stencil error: {0}")]
    Stencil(String),

    /// Nodal direction undefined (higher-order zero of the wavefunction at the flux).
    #[error("undefined nodal direction: {0}")]
    UndefinedDirection(String),

    /// Nodal-line march did not reach the boundary.
    #[error("nodal tracing failed after {steps} steps")]
    Tracing { steps: usize, partial: Vec<[f64; 2]> },

    /// An iterative method stopped without meeting its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::NonConvergence(_) | Error::Tracing { .. } => 4,
            _ => 3,
        }
    }
}
