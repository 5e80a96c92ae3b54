//! Library side of `chclab`: configuration, command runners and artifact writing.

pub mod config;
pub mod run;

pub use config::{Command, ExperimentConfig, Overrides, RawConfig, CONFIG_SCHEMA_VERSION};
pub use run::{run, sha256_hex, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] chc_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(chc_core::Error::SolverDiverged { .. }) => "solver",
            CliError::Core(chc_core::Error::LadderInfeasible(_)) => "ladder",
            CliError::Core(_) => "numerics",
            CliError::Io(_) | CliError::Csv(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to `error.json`.
    pub fn to_json(&self) -> serde_json::Value {
        let problems = match self {
            CliError::Config(p) => p.clone(),
            other => vec![other.to_string()],
        };
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
            "problems": problems,
        })
    }
}
