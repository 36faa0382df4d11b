use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gfsl_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path} not found; run `gfsl {stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<&'a str>,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Core(_) => "core",
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::Json { .. } => "json",
            Self::MissingArtifact { .. } => "missing-artifact",
            Self::Config(_) => "config",
            Self::Checkpoint(_) => "checkpoint",
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let stage = match self {
            Self::MissingArtifact { stage, .. } => Some(*stage),
            _ => None,
        };
        serde_json::to_string(&ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            stage,
        })
        .expect("plain struct serializes")
    }
}
