use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("window mismatch: {0}")]
    Window(String),

    #[error("time {t} is outside the noise grid [{t_min}, {t_max}]")]
    OutOfGrid { t: f64, t_min: f64, t_max: f64 },

    #[error("time {t} is not aligned with the noise grid (dt = {dt})")]
    OffGrid { t: f64, dt: f64 },

    #[error("noise path has no Ornstein-Uhlenbeck values attached")]
    MissingOu,

    #[error("noise paths differ: {expected} vs {found}")]
    PathMismatch { expected: String, found: String },

    #[error("integration blew up at t = {t} (sample {sample:?}); reduce dt")]
    BlowUp { t: f64, sample: Option<usize> },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing measure at time {0}")]
    MissingTime(f64),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
