use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("reaction `{0}` is not affine: second-order propensity")]
    NotAffine(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("integration diverged: non-finite state at t = {t}")]
    Diverged { t: f64 },

    #[error("reference (mu = {mu}, sigma2 = {sigma2}) is not admissible: violates {bound}")]
    Inadmissible { mu: f64, sigma2: f64, bound: &'static str },

    #[error("singular integral gain matrix: k2*k8 - k4*k6 = 0")]
    SingularGains,

    #[error("empty disturbance interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
