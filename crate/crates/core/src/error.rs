use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} outside array range [{lo}, {hi}]")]
    IndexOutOfRange { index: i64, lo: i64, hi: i64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("dictionary of {rows}x{cols} exceeds the {budget}-entry budget; restrict the LoS grid to a coarse sector first")]
    DictionaryTooLarge { rows: usize, cols: usize, budget: usize },

    #[error("no dominant direction: measurement vector is zero")]
    NoDominantDirection,

    #[error("empty support or sector: {0}")]
    Empty(String),

    #[error("cache format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}

pub type Result<T> = std::result::Result<T, Error>;
