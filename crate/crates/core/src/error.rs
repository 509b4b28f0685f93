use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input value")]
    NonFinite,

    #[error("insufficient sample: need at least {needed} observations, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("length mismatch: {xs} x-values but {ys} y-values")]
    LengthMismatch { xs: usize, ys: usize },

    #[error("value {0} lies outside [0, 1]")]
    OutOfUnitInterval(f64),

    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),

    #[error("enumeration over {size} support points exceeds the cap of {cap}")]
    EnumerationCap { size: usize, cap: usize },

    #[error("support of {size} points exceeds the cap of {cap}; treat the axis as continuous")]
    SupportTooLarge { size: usize, cap: usize },

    #[error("matrix is not symmetric (largest asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not square or has inconsistent rows")]
    NotSquare,

    #[error("Jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("degenerate marginal: the {0} axis has a single distinct value")]
    DegenerateMarginal(&'static str),

    #[error("target precision {target:e} unreachable; best achievable error bound is {achieved:e}")]
    Precision { target: f64, achieved: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
