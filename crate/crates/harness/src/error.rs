use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: missing key `{0}`")]
    MissingKey(String),

    #[error("config: key `{key}`: {msg}")]
    BadValue { key: String, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: wwlab_core::Error,
    },

    #[error("{0}")]
    Failed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn bad(key: &str, msg: impl Into<String>) -> Self {
        HarnessError::BadValue { key: key.to_string(), msg: msg.into() }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::MissingKey(_) | HarnessError::BadValue { .. } | HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for wwlab_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| HarnessError::Numerical { context: what(), source })
    }
}
