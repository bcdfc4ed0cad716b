use std::path::PathBuf;

use thiserror::Error;
use vreid::dataset::Finding;

/// Every failure a command can report. All of them exit with status 1;
/// usage errors are handled by the argument parser and exit with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] vreid::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input validation failed:\n{}", render(.0))]
    Findings(Vec<Finding>),

    #[error("{0}")]
    Usage(String),
}

fn render(findings: &[Finding]) -> String {
    findings.iter().map(|f| format!("  - {f}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
