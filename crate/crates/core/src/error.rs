use thiserror::Error;

/// Errors raised by model fitting, sampling, I/O and index estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input or configuration rather than by
    /// a numerical failure.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Schema(_) | Error::ModelFile(_)
        )
    }
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Error::Config(m) => Error::Config(m.clone()),
            Error::Parse { row, column, message } => Error::Parse { row: *row, column: column.clone(), message: message.clone() },
            Error::Schema(m) => Error::Schema(m.clone()),
            Error::SingularFit(m) => Error::SingularFit(m.clone()),
            Error::Divergence(m) => Error::Divergence(m.clone()),
            Error::Dimension(m) => Error::Dimension(m.clone()),
            Error::Conditioning(m) => Error::Conditioning(m.clone()),
            Error::Numerical(m) => Error::Numerical(m.clone()),
            Error::ModelFile(m) => Error::ModelFile(m.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}
