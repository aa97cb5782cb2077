use crate::graph::ProcessId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error(
        "fairness violation: process {process} enabled for steps {window_start}..={window_end} \
         without being activated"
    )]
    Fairness {
        process: ProcessId,
        window_start: usize,
        window_end: usize,
    },

    #[error("analysis error at configuration {index}: {message}")]
    Analysis { index: usize, message: String },

    #[error("scenario phase `{phase}` failed: {message}")]
    Scenario { phase: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }
}
