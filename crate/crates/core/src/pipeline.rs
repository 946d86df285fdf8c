//! End-to-end evaluation driven by a [`RunManifest`].

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::benchmark::{load_benchmark, read_questions, with_fewshot, Benchmark, BenchmarkError, Format, MCQuestion};
use crate::gateway::{
    evaluate_run, HttpResponder, MockOracle, QueryError, ResponseCache, ResponseRecord, RunError, RunOptions, RunOutput,
};
use crate::manifest::{FileRef, ResponderConfig, RunManifest};
use crate::metrics::EvaluationMatrix;
use crate::prompting::{select_fewshot, PromptConfig, PromptError};
use crate::variation::{generate_divergent_set_with, DivergentSet, VariationConfig, VariationError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: content hash {actual} does not match manifest {expected}")]
    HashMismatch {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("question {question_id:?}: {source}")]
    Variation {
        question_id: String,
        #[source]
        source: VariationError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Responder(#[from] QueryError),
    #[error(transparent)]
    Run(#[from] RunError),
}

impl PipelineError {
    /// Failures caused by the model endpoint rather than the input data.
    pub fn is_endpoint(&self) -> bool {
        matches!(
            self,
            PipelineError::Responder(_) | PipelineError::Run(RunError::Query { .. })
        )
    }
}

/// Inputs of a run, resolved and checked against the manifest.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub bench: Benchmark,
    pub sets: Vec<DivergentSet>,
    pub prompt: PromptConfig,
    pub fewshot: Vec<(MCQuestion, char)>,
}

fn verify(file: &FileRef) -> Result<(), PipelineError> {
    let actual = FileRef::of(Path::new(&file.path)).map_err(|source| PipelineError::Io {
        path: PathBuf::from(&file.path),
        source,
    })?;
    if actual.sha256 != file.sha256 {
        return Err(PipelineError::HashMismatch {
            path: file.path.clone(),
            expected: file.sha256.clone(),
            actual: actual.sha256,
        });
    }
    Ok(())
}

pub fn divergent_sets(bench: &Benchmark, seed: u64, cfg: &VariationConfig) -> Result<Vec<DivergentSet>, PipelineError> {
    bench
        .questions
        .iter()
        .map(|q| {
            generate_divergent_set_with(q, seed, cfg).map_err(|source| PipelineError::Variation {
                question_id: q.id.clone(),
                source,
            })
        })
        .collect()
}

pub fn prepare(manifest: &RunManifest) -> Result<PreparedRun, PipelineError> {
    verify(&manifest.benchmark)?;
    let prompt = manifest.prompt.to_config()?;
    let mut bench = load_benchmark(Path::new(&manifest.benchmark.path), Format::Jsonl)?;
    if let Some(pool_ref) = &manifest.fewshot {
        verify(pool_ref)?;
        let pool = read_questions(Path::new(&pool_ref.path))?;
        bench = with_fewshot(bench, pool, prompt.shot_count)?;
    }
    let pool = bench.fewshot_pool.as_deref().unwrap_or(&[]);
    let fewshot = select_fewshot(pool, &prompt, manifest.seed)?;
    let sets = divergent_sets(&bench, manifest.seed, &manifest.variation)?;
    Ok(PreparedRun {
        bench,
        sets,
        prompt,
        fewshot,
    })
}

/// Label a manifest's responder reports as its model name.
pub fn responder_label(manifest: &RunManifest) -> Result<String, QueryError> {
    Ok(match &manifest.responder {
        ResponderConfig::Endpoint(e) => e.model_name.clone(),
        ResponderConfig::MockOracle {
            success_rate,
            seed,
            on_failure,
        } => crate::gateway::Responder::model_name(&MockOracle::new(*success_rate, *seed, *on_failure)?).to_string(),
    })
}

pub async fn execute(
    manifest: &RunManifest,
    prepared: &PreparedRun,
    cache: &mut ResponseCache,
    opts: &RunOptions,
) -> Result<RunOutput, PipelineError> {
    let PreparedRun {
        bench,
        sets,
        prompt,
        fewshot,
    } = prepared;
    let out = match &manifest.responder {
        ResponderConfig::Endpoint(endpoint) => {
            let responder = HttpResponder::new(endpoint.clone())?;
            evaluate_run(bench, sets, &responder, prompt, fewshot, cache, opts).await?
        }
        ResponderConfig::MockOracle {
            success_rate,
            seed,
            on_failure,
        } => {
            let responder = MockOracle::new(*success_rate, *seed, *on_failure)?;
            evaluate_run(bench, sets, &responder, prompt, fewshot, cache, opts).await?
        }
    };
    Ok(out)
}

/// Matrix of the questions whose every variant has a record, in benchmark
/// order. `None` when no question is complete.
pub fn partial_matrix(bench: &Benchmark, sets: &[DivergentSet], records: &[ResponseRecord]) -> Option<EvaluationMatrix> {
    let by_key: HashMap<(&str, usize), bool> = records
        .iter()
        .map(|r| ((r.parent_id.as_str(), r.variant_index), r.correct))
        .collect();
    let set_of: HashMap<&str, &DivergentSet> = sets.iter().map(|s| (s.parent_id.as_str(), s)).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for q in &bench.questions {
        let Some(set) = set_of.get(q.id.as_str()) else { continue };
        let row: Option<Vec<bool>> = set
            .variants
            .iter()
            .map(|v| by_key.get(&(q.id.as_str(), v.variant_index)).copied())
            .collect();
        if let Some(row) = row {
            if seen.insert(q.id.as_str()) {
                ids.push(q.id.clone());
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        None
    } else {
        EvaluationMatrix::new(ids, rows).ok()
    }
}
