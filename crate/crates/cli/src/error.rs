//! Two-bucket error surface: what the user got wrong (exit 1) versus what
//! the environment got wrong (exit 2). The split is a CI contract, so the
//! mapping from library errors is centralized here and nowhere else.

use magic_core::arena::ArenaError;
use magic_core::corpus::CorpusError;
use magic_core::gateway::GatewayError;
use magic_core::pipeline::PipelineError;
use magic_core::prompts::PromptError;
use magic_core::report::ReportError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid data or configuration: corpus findings, malformed records,
    /// bad config values, impossible requests.
    Domain(String),
    /// The world outside the data: missing files, unreachable endpoints,
    /// failed writes.
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Environment(_) => 2,
        }
    }

    pub fn domain(detail: impl fmt::Display) -> Self {
        CliError::Domain(detail.to_string())
    }

    pub fn environment(detail: impl fmt::Display) -> Self {
        CliError::Environment(detail.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(detail) | CliError::Environment(detail) => f.write_str(detail),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::environment(e),
            _ => CliError::domain(e),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config { .. } => CliError::domain(e),
            _ => CliError::environment(e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corpus(inner) => inner.into(),
            PipelineError::Io { .. } => CliError::environment(e),
            PipelineError::CorruptRun { .. } | PipelineError::MissingRubric { .. } => {
                CliError::domain(e)
            }
        }
    }
}

impl From<ArenaError> for CliError {
    fn from(e: ArenaError) -> Self {
        match e {
            ArenaError::Gateway(inner) => inner.into(),
            _ => CliError::domain(e),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::environment(e),
            _ => CliError::domain(e),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::TemplateIo { .. } => CliError::environment(e),
            _ => CliError::domain(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::environment(e)
    }
}
