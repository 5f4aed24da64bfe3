use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad user configuration; `field` names the offending setting.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown edge id {0}")]
    UnknownEdge(usize),

    /// Linear solve failed or was too ill-conditioned to trust.
    #[error("numerical error at omega = {omega}: {message}")]
    Numerical { omega: f64, message: String },

    /// Arguments that are individually valid but do not belong together.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
