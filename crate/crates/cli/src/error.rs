use std::path::Path;

use cora_core::benchmark::BenchmarkError;
use cora_core::bootstrap::BootstrapError;
use cora_core::gateway::RunError;
use cora_core::guessing::GuessingError;
use cora_core::metrics::MetricError;
use cora_core::pipeline::PipelineError;
use serde_json::{json, Value};

/// A failure with its exit status. Printed to stderr as one JSON line.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { message: String, details: Value },
    Endpoint { message: String, details: Value },
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data {
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data {
            message: format!("{}: {e}", path.display()),
            details: json!({ "path": path.display().to_string() }),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Endpoint { .. } => 3,
        }
    }

    pub fn record(&self) -> Value {
        let (kind, message, details) = match self {
            CliError::Usage(m) => ("usage", m.as_str(), &Value::Null),
            CliError::Data { message, details } => ("data", message.as_str(), details),
            CliError::Endpoint { message, details } => ("endpoint", message.as_str(), details),
        };
        let mut rec = json!({
            "error": { "kind": kind, "message": message, "exit_code": self.exit_code() }
        });
        if !details.is_null() {
            rec["error"]["details"] = details.clone();
        }
        rec
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::Run(RunError::Query {
                question_id,
                variant_index,
                completed,
                ..
            }) => CliError::Endpoint {
                message,
                details: json!({
                    "question_id": question_id,
                    "variant_index": variant_index,
                    "completed_records": completed.len(),
                }),
            },
            e if e.is_endpoint() => CliError::Endpoint {
                message,
                details: Value::Null,
            },
            _ => CliError::data(message),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e.to_string())
            }
        })*
    };
}

data_error!(BenchmarkError, BootstrapError, GuessingError, MetricError, serde_json::Error);
