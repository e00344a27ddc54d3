use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Data {
        context: String,
        #[source]
        source: gazekit::Error,
    },
}

impl CliError {
    /// 2 for I/O failures, 1 for everything the user can fix in the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for gazekit::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Data { context: context(), source })
    }
}
