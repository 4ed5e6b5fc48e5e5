use std::path::PathBuf;

use crate::coupler::BoundaryState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which side of the co-simulation boundary produced a solver failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Transmission,
    Distribution,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Transmission => f.write_str("transmission"),
            Side::Distribution => f.write_str("distribution"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{solver} did not converge after {iterations} iterations (final residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular Jacobian at pivot for bus {bus}")]
    SingularJacobian { bus: i64 },

    #[error("singular linear system; affected buses {buses:?}")]
    SingularSystem { buses: Vec<i64> },

    #[error("voltage collapse at node {node} phase {phase}: |V| = {magnitude:.4} pu")]
    VoltageCollapse {
        node: String,
        phase: char,
        magnitude: f64,
    },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown bus {0}")]
    UnknownBus(i64),

    #[error("hour {0} is outside 0..=23")]
    HourOutOfRange(usize),

    #[error("zero voltage at PCC bus {bus} phase {phase}; cannot form load current")]
    ZeroPccVoltage { bus: i64, phase: char },

    #[error("mismatched configuration: {0}")]
    Mismatch(String),

    #[error("{side} solver failed: {source}")]
    Solver {
        side: Side,
        #[source]
        source: Box<Error>,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (boundary error {error:.3e})")]
    FpiNonConvergence {
        iterations: usize,
        error: f64,
        history: Vec<BoundaryState>,
    },

    #[error("missing phase {0} in a three-phase voltage set")]
    MissingPhase(char),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable label for result tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::NonConvergence { .. } => "nonconvergence",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::SingularSystem { .. } => "singular_system",
            Error::VoltageCollapse { .. } => "voltage_collapse",
            Error::UnknownNode(_) => "unknown_node",
            Error::UnknownBus(_) => "unknown_bus",
            Error::HourOutOfRange(_) => "hour_out_of_range",
            Error::ZeroPccVoltage { .. } => "zero_pcc_voltage",
            Error::Mismatch(_) => "mismatch",
            Error::Solver { source, .. } => source.tag(),
            Error::FpiNonConvergence { .. } => "fpi_nonconvergence",
            Error::MissingPhase(_) => "missing_phase",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn on(self, side: Side) -> Self {
        Error::Solver {
            side,
            source: Box::new(self),
        }
    }
}
