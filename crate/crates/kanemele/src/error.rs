use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the compute routines and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Eigensolver failed to converge or was handed a non-Hermitian matrix.
    #[error("eigensolver: {reason} (matrix dim {dim}, norm {norm:.3e})")]
    Eigensolver { reason: String, dim: usize, norm: f64 },

    /// A fiber eigenvalue sits within the resolution limit of the chemical
    /// potential, so the Fermi projector is ill-defined there.
    #[error("gap too small at k = ({k0:.6}, {k1:.6}): |E - mu| = {dist:.3e}")]
    GapTooSmall { k0: f64, k1: f64, dist: f64 },

    /// Green-function fiber requested at (or numerically at) a singular point.
    #[error("singular Green fiber at k0 = {freq:.6}, k = ({k0:.6}, {k1:.6})")]
    SingularFiber { freq: f64, k0: f64, k1: f64 },

    /// Quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: best estimate {best:.17e}, achieved error {achieved:.3e}, requested {requested:.3e}")]
    NonConvergence { best: f64, achieved: f64, requested: f64 },

    /// A parameter point required to be insulating is not.
    #[error("not an insulator: {0}")]
    Phase(String),

    /// Chern plaquette phase too close to the branch cut; grid must be refined.
    #[error("chern plaquette phase {phase:.6} within {margin:.1e} of branch cut at grid {grid}; refine the grid")]
    RefineGrid { phase: f64, margin: f64, grid: usize },

    /// Singular propagator evaluated where chi(m, q) vanishes.
    #[error("singular input: chi(m, q) = 0 at m = {m:.6}, q = ({q0:.6}, {q1:.6}, {q2:.6})")]
    SingularInput { m: f64, q0: f64, q1: f64, q2: f64 },

    /// Closed-form jump undefined: 2 t lambda_so - lambda_r^2 r = 0.
    #[error("singular parameters: 2 t lambda_so - lambda_r^2 r = 0")]
    SingularParameters,

    /// Flake spectrum has no gap at the requested chemical potential.
    #[error("no spectral gap at mu = {mu:.6}: nearest level at distance {dist:.3e}")]
    NoGap { mu: f64, dist: f64 },

    /// Invalid model parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Configuration file could not be parsed or is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Internal consistency check failed (indicates a bug, not bad input).
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 phase/gap, 4 convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParams(_) => 2,
            Error::GapTooSmall { .. }
            | Error::Phase(_)
            | Error::NoGap { .. }
            | Error::SingularFiber { .. } => 3,
            Error::NonConvergence { .. } | Error::RefineGrid { .. } => 4,
            _ => 1,
        }
    }
}
