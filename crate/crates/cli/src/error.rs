use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cvverify::Error),

    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{message}")]
    Hinted { kind: &'static str, message: String, hint: String, config: bool },
}

#[derive(Serialize)]
struct ErrorDocument<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    hint: Option<&'a str>,
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_string(), source }
    }

    /// Attaches a usage hint to a library error, keeping its kind.
    pub fn hint(err: cvverify::Error, hint: impl Into<String>) -> Self {
        CliError::Hinted { kind: err.kind(), config: err.is_config_error(), message: err.to_string(), hint: hint.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "Config",
            CliError::Io { .. } => "Io",
            CliError::Hinted { kind, .. } => kind,
        }
    }

    /// 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        let config = match self {
            CliError::Core(e) => e.is_config_error(),
            CliError::Config(_) | CliError::Io { .. } => true,
            CliError::Hinted { config, .. } => *config,
        };
        if config {
            2
        } else {
            3
        }
    }

    pub fn to_json(&self) -> String {
        let hint = match self {
            CliError::Hinted { hint, .. } => Some(hint.as_str()),
            _ => None,
        };
        serde_json::to_string(&ErrorDocument { error: self.kind(), message: self.to_string(), hint }).expect("error serializes")
    }
}
