use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] assumption_lab::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Lab(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }

    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Lab(e) if e.is_numeric() => "numeric",
            Self::Lab(_) => "model",
            Self::Io { .. } => "io",
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}
