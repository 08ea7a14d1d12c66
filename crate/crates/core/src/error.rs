//! Error type shared by all modules.

/// Failure modes of the scattering kernels.
///
/// Positions and magnitudes in payloads are reported as `f64` regardless of
/// the working scalar type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The flow of `sqrt(2q)` is singular at `omega = 0`.
    #[error("degenerate angular direction: q(theta, omega) = 0")]
    DegenerateDirection,

    /// Zero-energy or zero-angular-momentum trajectories have no scattering data.
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(&'static str),

    #[error("adaptive step size underflow at t = {t:e} (step {step:e})")]
    IntegrationFailure { t: f64, step: f64 },

    /// A conic trajectory with `q0 = 0` crossed the cone tip.
    #[error("trajectory exits the cone domain: r(t) <= 0 at t = {t:e}")]
    DomainExit { t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// A perturbed trajectory fell below the working radial floor.
    #[error("trapped trajectory: r(t) = {r:e} fell below {floor:e} at t = {t:e}")]
    TrappedTrajectory { t: f64, r: f64, floor: f64 },

    /// Tail extrapolation failed its three-point consistency check.
    #[error("accuracy loss: {0}")]
    Accuracy(String),

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoSolution { iterations: usize, residual: f64 },

    /// A sampling grid does not cover the requested resolution or support.
    #[error("coverage error: {0}")]
    Coverage(String),

    /// Input to the diagonal scattering matrix is not band-limited.
    #[error("spectral leak: relative mass {leak:e} outside |m| <= {m_max}")]
    SpectralLeak { leak: f64, m_max: i64 },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidInput(what.into())
    }

    pub(crate) fn domain(what: impl Into<String>) -> Self {
        Error::Domain(what.into())
    }
}
