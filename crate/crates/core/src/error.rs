use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("scale N = {n} exceeds the resolved band (max {max})")]
    Unresolved { n: f64, max: f64 },

    #[error("pointwise product would alias: active bands {band_f} + {band_g} exceed {limit}")]
    Aliasing { band_f: f64, band_g: f64, limit: f64 },

    #[error("support check failed: tail mass fraction {tail:e} outside the central half exceeds {limit:e}")]
    Support { tail: f64, limit: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("path integration step rejected at x = {x}: constraint drift {drift:e} exceeds {limit:e}")]
    StepRejected { x: f64, drift: f64, limit: f64 },

    #[error("resampling point {x} lies outside [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("picard iteration did not contract: increments {increments:?}")]
    NonContraction { increments: Vec<f64> },

    #[error("picard iteration hit max_iter = {max_iter}, last increment {last:e}")]
    MaxIter { max_iter: usize, last: f64 },

    #[error("characteristic march blew up at offset {offset}: |phi| = {value}")]
    BlowUp { offset: usize, value: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
