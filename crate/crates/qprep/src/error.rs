use thiserror::Error;

/// Errors shared across the solver, simulation, and optimization layers.
#[derive(Debug, Error)]
pub enum Error {
    /// The integration step does not tile a pulse segment.
    #[error("time step {dt} does not tile segment duration {duration} (fractional remainder {remainder:.3e} steps)")]
    SegmentGridMismatch {
        dt: f64,
        duration: f64,
        remainder: f64,
    },

    /// A state that must lie on the unit sphere does not.
    #[error("state is not pure: |q| = {norm} deviates from 1 beyond tolerance")]
    NonPureTarget { norm: f64 },

    /// The optimal Rabi drive diverges because the boundary states share
    /// the same x coordinate. Such targets are unreachable with a single
    /// constant pulse while the level splitting stays on.
    #[error("optimal Rabi drive diverges: |x_F - x_I| = {dx:.3e} <= {tol:.3e}; targets on the x_F = x_I plane are unreachable with a single constant pulse")]
    DivergentControl { dx: f64, tol: f64 },

    /// A Rabi amplitude exceeds the hardware cap.
    #[error("Rabi amplitude {omega} exceeds the cap {cap}")]
    ControlCapExceeded { omega: f64, cap: f64 },

    /// An inverse-cosine argument left [-1, 1] beyond the clamping tolerance.
    #[error("arccos argument {value} lies outside [-1, 1] beyond tolerance")]
    DomainError { value: f64 },

    /// A variational constraint residual exceeded its tolerance.
    #[error("variational residual {residual:.3e} ({which}) exceeds tolerance {tol:.3e}")]
    ResidualExceeded {
        which: &'static str,
        residual: f64,
        tol: f64,
    },

    /// The adjoint gradient failed the finite-difference cross-check.
    #[error("adjoint gradient disagrees with central finite differences: relative error {rel_err:.3e}")]
    GradientCheckFailed { rel_err: f64 },

    /// A caller violated an argument precondition.
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SegmentGridMismatch { .. } => "segment_grid_mismatch",
            Error::NonPureTarget { .. } => "non_pure_target",
            Error::DivergentControl { .. } => "divergent_control",
            Error::ControlCapExceeded { .. } => "control_cap_exceeded",
            Error::DomainError { .. } => "domain_error",
            Error::ResidualExceeded { .. } => "residual_exceeded",
            Error::GradientCheckFailed { .. } => "gradient_check_failed",
            Error::Invalid(_) => "invalid_argument",
            Error::Io(_) => "io_error",
        }
    }

    /// Domain errors are caller-facing validation failures (CLI exit code 2);
    /// everything else is treated as internal (exit code 1).
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::NonPureTarget { .. }
                | Error::DivergentControl { .. }
                | Error::ControlCapExceeded { .. }
                | Error::DomainError { .. }
                | Error::SegmentGridMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
