use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("convention violation: {0}")]
    Convention(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("integration accuracy: {0}")]
    IntegrationAccuracy(String),
    #[error("control singularity: {0}")]
    ControlSingularity(String),
    #[error("gate outside weak-drive regime: {0}")]
    GateRegime(String),
    #[error("spectral accuracy: {0}")]
    SpectralAccuracy(String),
    #[error("eigensolver: {0}")]
    Eigensolver(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors raised because a numerical method or physical regime broke down,
    /// as opposed to malformed input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationAccuracy(_)
                | Error::ControlSingularity(_)
                | Error::GateRegime(_)
                | Error::SpectralAccuracy(_)
                | Error::Eigensolver(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
