use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("resonant block at degree {degree} (eigenvalue {eigenvalue}): residual {residual:e} exceeds tolerance")]
    Resonance { degree: usize, eigenvalue: f64, residual: f64 },

    #[error("positivity floor violated in component {component} at r = {r} (value {value:e})")]
    Positivity { component: usize, r: f64, value: f64 },

    #[error("exponential overflow at r = {r}: exponent {exponent}")]
    Overflow { r: f64, exponent: f64 },

    #[error("quadrature support extends to {needed}, grid only reaches {available}")]
    QuadratureDomain { needed: f64, available: f64 },

    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    Stiffness { t: f64, dt: f64 },

    #[error("no bracket: both endpoints escape with sign {sign}")]
    NoBracket { sign: i8 },

    #[error("gluing mismatch {jump} at r = {r} exceeds tolerance {tolerance}")]
    Gluing { r: f64, jump: f64, tolerance: f64 },

    #[error("root finding failed: {0}")]
    RootFind(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
