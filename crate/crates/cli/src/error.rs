use std::path::PathBuf;

/// Failures surfaced by the lab front end, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Spec(#[from] ancilla_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error on {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
}

impl LabError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 validation failure, 2 config error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Validation(_) => 1,
            LabError::Parse { .. } | LabError::Config { .. } | LabError::Spec(_) => 2,
            LabError::Io { .. } | LabError::Csv { .. } => 3,
        }
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
