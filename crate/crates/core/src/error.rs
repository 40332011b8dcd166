use thiserror::Error;

use crate::align::AlignError;
use crate::corpus::CorpusError;
use crate::decoder::DecodeError;
use crate::eval::EvalError;
use crate::lm::LmError;
use crate::pivot::PivotError;
use crate::tm::TmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error for code that chains several stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Pivot(#[from] PivotError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad settings rather than bad data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Corpus(CorpusError::UnknownLanguage(_)) => true,
            Error::Decode(DecodeError::WeightLength { .. }) => true,
            Error::Pivot(PivotError::Stage { source, .. }) => {
                matches!(source, DecodeError::WeightLength { .. })
            }
            _ => false,
        }
    }
}
