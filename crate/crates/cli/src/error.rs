use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {detail}")]
    Config { path: String, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("{stage}: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: transient_clv::Error,
    },

    #[error("{path}: {detail}")]
    Artifact { path: PathBuf, detail: String },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn checkpoint(path: impl AsRef<Path>, detail: impl Into<String>) -> Self {
        CliError::Checkpoint {
            path: path.as_ref().to_path_buf(),
            detail: detail.into(),
        }
    }

    pub fn artifact(path: impl AsRef<Path>, detail: impl Into<String>) -> Self {
        CliError::Artifact {
            path: path.as_ref().to_path_buf(),
            detail: detail.into(),
        }
    }

    pub fn config(path: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Machine-readable code printed as `error[CODE]`.
    pub fn code(&self) -> String {
        match self {
            CliError::Config { .. } => "E_CONFIG".into(),
            CliError::Io { .. } => "E_IO".into(),
            CliError::Checkpoint { .. } => "E_CHECKPOINT".into(),
            CliError::Pipeline { source, .. } => format!("E_PIPELINE_{}", source.code()),
            CliError::Artifact { .. } => "E_ARTIFACT".into(),
        }
    }

    /// Process exit status; 2 is reserved for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 3,
            CliError::Io { .. } => 4,
            CliError::Checkpoint { .. } => 5,
            CliError::Pipeline { .. } => 6,
            CliError::Artifact { .. } => 7,
        }
    }

    /// One line: `error[CODE]: detail`.
    pub fn render(&self) -> String {
        let mut detail = self.to_string();
        let mut src = std::error::Error::source(self);
        // Io and Pipeline already print their source in Display
        if matches!(self, CliError::Io { .. } | CliError::Pipeline { .. }) {
            src = src.and_then(|s| s.source());
        }
        while let Some(s) = src {
            detail.push_str(&format!(": {s}"));
            src = s.source();
        }
        format!("error[{}]: {}", self.code(), detail.replace('\n', " "))
    }
}

pub(crate) trait PipelineContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> PipelineContext<T> for Result<T, transient_clv::Error> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Pipeline { stage, source })
    }
}
