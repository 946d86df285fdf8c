use std::collections::{HashMap, HashSet};

use futures::StreamExt;
use thiserror::Error;

use super::{prompt_hash, CacheError, PromptRequest, QueryError, Responder, ResponseCache, ResponseRecord};
use crate::benchmark::{Benchmark, MCQuestion};
use crate::metrics::{EvaluationMatrix, MetricError};
use crate::prompting::{parse_response, render_prompt, AnswerKind, PromptConfig, PromptError};
use crate::variation::{DivergentSet, VariantQuestion};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Upper bound on outstanding responder calls.
    pub max_in_flight: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_in_flight: 8 }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub matrix: EvaluationMatrix,
    /// One record per variant, in (question, variant) order.
    pub records: Vec<ResponseRecord>,
    pub endpoint_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no divergent set for question {0:?}")]
    MissingSet(String),
    #[error("question {question_id:?} variant {variant_index}: {source}")]
    Prompt {
        question_id: String,
        variant_index: usize,
        #[source]
        source: PromptError,
    },
    #[error("question {question_id:?} variant {variant_index}: {source}")]
    Query {
        question_id: String,
        variant_index: usize,
        #[source]
        source: QueryError,
        /// Records for every variant whose response was obtained before the failure.
        completed: Vec<ResponseRecord>,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Matrix(#[from] MetricError),
}

/// A rendered variant awaiting an answer.
#[derive(Debug, Clone)]
pub struct Job<'a> {
    pub question_index: usize,
    pub variant: &'a VariantQuestion,
    pub prompt: String,
    pub prompt_hash: String,
}

fn build_jobs<'a>(
    bench: &Benchmark,
    sets: &'a [DivergentSet],
    model_name: &str,
    cfg: &PromptConfig,
    fewshot: &[(MCQuestion, char)],
) -> Result<Vec<Job<'a>>, RunError> {
    let by_id: HashMap<&str, &DivergentSet> = sets.iter().map(|s| (s.parent_id.as_str(), s)).collect();
    let mut jobs = Vec::new();
    for (qi, q) in bench.questions.iter().enumerate() {
        let set = by_id
            .get(q.id.as_str())
            .ok_or_else(|| RunError::MissingSet(q.id.clone()))?;
        for v in &set.variants {
            let prompt = render_prompt(&q.stem, v, cfg, fewshot).map_err(|source| RunError::Prompt {
                question_id: q.id.clone(),
                variant_index: v.variant_index,
                source,
            })?;
            let prompt_hash = prompt_hash(model_name, &prompt);
            jobs.push(Job {
                question_index: qi,
                variant: v,
                prompt,
                prompt_hash,
            });
        }
    }
    Ok(jobs)
}

fn record_for(job: &Job<'_>, raw_text: &str, model_name: &str, timestamp: &str, alphabet: &[char]) -> ResponseRecord {
    let parsed = parse_response(raw_text, job.variant.choices.len(), alphabet);
    let correct = parsed.kind == AnswerKind::Valid(job.variant.answer_index);
    ResponseRecord {
        parent_id: job.variant.parent_id.clone(),
        variant_index: job.variant.variant_index,
        prompt_hash: job.prompt_hash.clone(),
        raw_text: raw_text.to_string(),
        parsed,
        correct,
        model_name: model_name.to_string(),
        timestamp: timestamp.to_string(),
    }
}

fn records_from_cache(jobs: &[Job<'_>], cache: &ResponseCache, model_name: &str, alphabet: &[char]) -> Vec<ResponseRecord> {
    jobs.iter()
        .filter_map(|job| {
            cache
                .get(&job.prompt_hash)
                .map(|hit| record_for(job, &hit.raw_text, model_name, &hit.timestamp, alphabet))
        })
        .collect()
}

/// Answers every variant of every question and assembles the correctness matrix.
///
/// Cached prompts are never re-sent. Distinct uncached prompts are dispatched
/// with at most `opts.max_in_flight` outstanding calls, and results are
/// committed to the cache in (question, variant) order, so the matrix does
/// not depend on completion order.
pub async fn evaluate_run<R: Responder>(
    bench: &Benchmark,
    sets: &[DivergentSet],
    responder: &R,
    prompt_cfg: &PromptConfig,
    fewshot: &[(MCQuestion, char)],
    cache: &mut ResponseCache,
    opts: &RunOptions,
) -> Result<RunOutput, RunError> {
    let model_name = responder.model_name().to_string();
    let alphabet = prompt_cfg.alphabet();
    let jobs = build_jobs(bench, sets, &model_name, prompt_cfg, fewshot)?;

    let mut cache_hits = 0;
    let mut queued = HashSet::new();
    let mut pending = Vec::new();
    for (ji, job) in jobs.iter().enumerate() {
        if cache.get(&job.prompt_hash).is_some() {
            cache_hits += 1;
        } else if queued.insert(job.prompt_hash.as_str()) {
            pending.push(ji);
        }
    }

    let endpoint_calls = pending.len();
    let mut answers = futures::stream::iter(pending.iter().map(|&ji| {
        let job = &jobs[ji];
        async move {
            let request = PromptRequest {
                prompt: &job.prompt,
                prompt_hash: &job.prompt_hash,
                num_choices: job.variant.choices.len(),
                answer_index: job.variant.answer_index,
                alphabet,
            };
            (ji, responder.respond(&request).await)
        }
    }))
    .buffered(opts.max_in_flight.max(1));

    while let Some((ji, result)) = answers.next().await {
        let job = &jobs[ji];
        match result {
            Ok(text) => {
                let now = chrono::Utc::now().to_rfc3339();
                cache.insert(record_for(job, &text, &model_name, &now, alphabet))?;
            }
            Err(source) => {
                drop(answers);
                return Err(RunError::Query {
                    question_id: job.variant.parent_id.clone(),
                    variant_index: job.variant.variant_index,
                    source,
                    completed: records_from_cache(&jobs, cache, &model_name, alphabet),
                });
            }
        }
    }
    drop(answers);

    let records = records_from_cache(&jobs, cache, &model_name, alphabet);
    debug_assert_eq!(records.len(), jobs.len());
    let mut rows: Vec<Vec<bool>> = vec![Vec::new(); bench.len()];
    for (job, rec) in jobs.iter().zip(&records) {
        rows[job.question_index].push(rec.correct);
    }
    let ids = bench.questions.iter().map(|q| q.id.clone()).collect();
    Ok(RunOutput {
        matrix: EvaluationMatrix::new(ids, rows)?,
        records,
        endpoint_calls,
        cache_hits,
    })
}
