//! Run manifests: everything needed to reproduce an evaluation artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::{FailureMode, ModelEndpoint};
use crate::metrics::EvaluationMatrix;
use crate::prompting::{PromptConfig, PromptError};
use crate::seeding::sha256_hex;
use crate::variation::VariationConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl FileRef {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponderConfig {
    Endpoint(ModelEndpoint),
    MockOracle {
        success_rate: f64,
        seed: u64,
        on_failure: FailureMode,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSettings {
    pub template: String,
    pub alphabet: String,
    pub shot_count: usize,
}

impl PromptSettings {
    pub fn from_config(cfg: &PromptConfig) -> Self {
        Self {
            template: cfg.template().to_string(),
            alphabet: cfg.alphabet().iter().collect(),
            shot_count: cfg.shot_count,
        }
    }

    pub fn to_config(&self) -> Result<PromptConfig, PromptError> {
        PromptConfig::new(self.template.clone(), &self.alphabet, self.shot_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub benchmark: FileRef,
    #[serde(default)]
    pub fewshot: Option<FileRef>,
    pub seed: u64,
    pub responder: ResponderConfig,
    pub prompt: PromptSettings,
    pub variation: VariationConfig,
}

impl RunManifest {
    /// Digest of the manifest's canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

/// The matrix file written by a run. `incomplete` marks a run that stopped
/// early; its matrix then holds only the fully answered questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixArtifact {
    pub label: String,
    pub manifest_hash: String,
    pub incomplete: bool,
    pub manifest: RunManifest,
    pub matrix: Option<EvaluationMatrix>,
}

impl MatrixArtifact {
    pub fn new(label: String, manifest: RunManifest, matrix: Option<EvaluationMatrix>, incomplete: bool) -> Self {
        Self {
            label,
            manifest_hash: manifest.hash(),
            incomplete,
            manifest,
            matrix,
        }
    }
}

/// Manifest for artifacts that do not come from a model run, such as the
/// guessing table, keyed by the command and its parameters.
pub fn parameter_hash(command: &str, params: &serde_json::Value) -> String {
    let body = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "command": command,
        "params": params,
    });
    sha256_hex(&serde_json::to_vec(&body).expect("json serializes"))
}
