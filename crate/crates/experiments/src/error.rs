use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: gibbscode::error::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("fit failed: {0}")]
    Fit(String),
}

impl From<gibbscode::error::Error> for ExpError {
    fn from(source: gibbscode::error::Error) -> Self {
        ExpError::Core {
            context: "core".into(),
            source,
        }
    }
}

/// Attaches the failing sub-case to a core error.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, gibbscode::error::Error> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| ExpError::Core {
            context: what(),
            source,
        })
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;
