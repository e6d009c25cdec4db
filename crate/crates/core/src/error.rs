use thiserror::Error;

/// Errors raised by the estimation, simulation and selection routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("no sample point falls inside the kernel window")]
    EmptyWindow,

    #[error("empty input")]
    EmptyInput,

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },

    #[error("bandwidth net is empty: h_minus = {h_minus} >= h_plus = {h_plus}")]
    NetEmpty { h_minus: f64, h_plus: f64 },

    #[error("every bandwidth in the net was excluded")]
    NetUnusable,

    #[error("no (contrast, kernel) pair produced a valid variance estimate")]
    AllInvalid,

    #[error("root is not bracketed on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Method-level failures map to exit code 2, malformed input to 1, the rest to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::Io(_) => 1,
            Error::NetEmpty { .. } | Error::NetUnusable | Error::AllInvalid | Error::EmptyWindow => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
