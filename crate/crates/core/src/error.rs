use std::path::PathBuf;

use thiserror::Error;

use crate::instances::OracleMode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain point out of range: function {func}, element {elem}")]
    Domain { func: usize, elem: usize },

    #[error("oracle is in {actual:?} mode, operation needs {expected:?}")]
    Mode {
        expected: OracleMode,
        actual: OracleMode,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("state space too large: {size} exceeds cap {cap}")]
    Size { size: usize, cap: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid instance: {0}")]
    Validation(String),

    #[error("cannot construct instance: {0}")]
    Construction(String),

    #[error(
        "calibration failed: no constant in {candidates:?} reached {target}; best curve {curve:?}"
    )]
    Calibration {
        candidates: Vec<u32>,
        target: f64,
        curve: Vec<(u32, f64)>,
    },

    #[error("exponent fit failed: {0}")]
    Fit(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
