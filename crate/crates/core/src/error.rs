use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("causality violation: nonzero amplitude at bin {bin} (tau = {tau_ns} ns)")]
    Causality { bin: usize, tau_ns: f64 },

    #[error("length mismatch: expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },

    #[error("delay T = {0} ns does not map onto the bin lattice")]
    MisalignedDelay(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("envelope is identically zero")]
    ZeroEnvelope,

    #[error("no usable data: {0}")]
    NoData(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
