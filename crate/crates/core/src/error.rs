use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpdmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bandwidth tuning failed: maximum log-log slope {max_slope:.3e} is not above 0.05")]
    TuningFailed { max_slope: f64 },

    #[error("degenerate geometry at point {point}: {reason}")]
    DegenerateGeometry { point: usize, reason: String },

    #[error("normal orientation ambiguous at boundary point {point} (|dot| = {dot:.3e})")]
    OrientationAmbiguous { point: usize, dot: f64 },

    #[error("point {0} has no kernel weight under the neighbor mask")]
    DisconnectedPoint(usize),

    #[error("invalid coefficient at point {point}: {reason}")]
    InvalidCoefficient { point: usize, reason: String },

    #[error("diffusion tensor at point {point} has condition number {cond:.3e}")]
    IllConditionedDiffusion { point: usize, cond: f64 },

    #[error("extrapolation system singular (J = {boundary_points}, K = {layers})")]
    ExtrapolationSingular {
        boundary_points: usize,
        layers: usize,
    },

    #[error("invalid boundary condition: {0}")]
    InvalidBc(String),

    #[error("linear solve failed: {reason} (condition estimate {cond_estimate:.3e})")]
    SolverFailure { reason: String, cond_estimate: f64 },

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GpdmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> GpdmError {
    GpdmError::InvalidArgument(msg.into())
}
