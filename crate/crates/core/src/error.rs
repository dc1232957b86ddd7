use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("delta pulse has no pointwise waveform value")]
    DeltaNotPointwise,

    #[error("time {t} outside [0, {limit}]")]
    OutOfRange { t: f64, limit: f64 },

    #[error("unknown pulse shape `{0}`")]
    UnknownShape(String),

    #[error("unknown sequence `{0}`")]
    UnknownSequence(String),

    #[error(
        "quadrature did not converge: estimated error {estimate:.3e} > tolerance {tolerance:.3e}"
    )]
    QuadratureNotConverged { estimate: f64, tolerance: f64 },

    #[error("pulse shape is not symmetric about its midpoint (deviation {0:.3e})")]
    AsymmetricPulse(f64),

    #[error("rate matrix has a negative eigenvalue {0:.3e}")]
    IndefiniteRates(f64),

    #[error("rate matrix is not symmetric")]
    AsymmetricRates,

    #[error("rate model is not of NMR form (gamma_xx = gamma_yy, off-diagonal rates zero)")]
    NotNmrForm,

    #[error("sequence `{sequence}` needs {expected} pulses, shape rotates by {actual:.6}")]
    AngleMismatch {
        sequence: String,
        expected: String,
        actual: f64,
    },

    #[error("analytic case `{0}` is not supported for this model")]
    UnsupportedCase(String),

    #[error("noise grid step {dt} is too coarse for correlation time {tau_c}")]
    GridTooCoarse { dt: f64, tau_c: f64 },

    #[error("integration step too large: |V|*dt = {0:.3} rad exceeds 0.2")]
    StepTooLarge(f64),

    #[error("checkpoint times do not match")]
    CheckpointMismatch,

    #[error(
        "shape design did not converge: best residual {residual:.3e} after {restarts} restarts"
    )]
    NotConverged { residual: f64, restarts: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
