use std::path::PathBuf;

/// Errors raised by the harness, file formats and CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Failure inside the numerical core.
    #[error(transparent)]
    Core(#[from] kpin_core::Error),
    /// Filesystem or stream failure.
    #[error("{path}: {source}")]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// Stream failure without a known path.
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    /// Invalid scenario configuration.
    #[error("invalid config: {0}")]
    Config(String),
    /// Config file could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// CSV failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// Malformed binary file.
    #[error("bad file format: {0}")]
    Format(String),
    /// Unknown ablation name.
    #[error("unknown ablation '{0}'")]
    UnknownAblation(String),
}

/// Result alias for this crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
