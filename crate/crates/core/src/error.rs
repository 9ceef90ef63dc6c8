use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field does not live on the expected lattice")]
    LatticeMismatch,

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("probe {0}")]
    ProbeOutOfRange(String),

    #[error("degenerate regression: {0}")]
    DegenerateFit(String),

    #[error("moment table is missing {0}")]
    MissingMoment(String),

    #[error("sample {index} failed: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_sample(self, index: usize) -> Self {
        match self {
            e @ Error::SampleFailed { .. } => e,
            e => Error::SampleFailed {
                index,
                source: Box::new(e),
            },
        }
    }
}
