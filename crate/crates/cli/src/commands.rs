use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use cora_core::benchmark::{load_benchmark, Format as InputFormat};
use cora_core::bootstrap::{bootstrap_replicates, BootstrapConfig, BootstrapSummary, IndexMode};
use cora_core::gateway::{FailureMode, ModelEndpoint, ResponseCache, ResponseRecord, RunError, RunOptions};
use cora_core::guessing::guessing_table;
use cora_core::manifest::{parameter_hash, FileRef, MatrixArtifact, PromptSettings, ResponderConfig, RunManifest, TOOL_VERSION};
use cora_core::metrics::{mcqa, score, Averaging, EvaluationMatrix, MetricOptions, MetricReport, DEFAULT_BMCA_SWEEP};
use cora_core::pipeline::{divergent_sets, execute, partial_matrix, prepare, responder_label, PipelineError};
use cora_core::prompting::{PromptConfig, DEFAULT_ALPHABET, DEFAULT_TEMPLATE};
use cora_core::report::{self, AblationColumn, BootstrapColumn, GuessingParams, ReportColumn};
use cora_core::variation::{filter_same_cardinality, same_cardinality_columns, NotaPlacement, VariationConfig};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::{
    AblationArgs, BootstrapArgs, Command, FormatArg, GuessingArgs, MatrixInputs, PlacementArg, RunArgs, ScoreArgs,
    ScoreOptions, VariantsArgs, VariationFlags,
};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Variants(a) => cmd_variants(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Bootstrap(a) => cmd_bootstrap(&a),
        Command::GuessingTable(a) => cmd_guessing_table(&a),
        Command::Ablation(a) => cmd_ablation(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::data(format!("stdout: {e}")))
        }
    }
}

/// Writes one JSON object per item, each tagged with the manifest hash.
fn write_tagged_lines<T: Serialize>(path: &Path, items: &[T], manifest_hash: &str) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let mut value = serde_json::to_value(item)?;
        value["manifest_hash"] = json!(manifest_hash);
        serde_json::to_writer(&mut w, &value)?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn variation_config(flags: &VariationFlags) -> VariationConfig {
    let mut cfg = VariationConfig::default();
    if let Some(text) = &flags.nota_text {
        cfg.nota_text = text.clone();
    }
    cfg.nota_placement = match flags.nota_placement {
        PlacementArg::InPlace => NotaPlacement::InPlace,
        PlacementArg::Appended => NotaPlacement::Appended,
    };
    cfg
}

fn file_ref(path: &Path) -> Result<FileRef, CliError> {
    FileRef::of(path).map_err(|e| CliError::io(path, e))
}

fn cmd_variants(args: &VariantsArgs) -> Result<(), CliError> {
    let bench = load_benchmark(&args.benchmark, InputFormat::Jsonl)?;
    let variation = variation_config(&args.variation);
    let mut sets = divergent_sets(&bench, args.seed, &variation)?;
    if args.same_cardinality {
        for (set, q) in sets.iter_mut().zip(&bench.questions) {
            *set = filter_same_cardinality(set, q.num_choices());
        }
    }
    let hash = parameter_hash(
        "variants",
        &json!({
            "benchmark": file_ref(&args.benchmark)?,
            "seed": args.seed,
            "variation": variation,
            "same_cardinality": args.same_cardinality,
        }),
    );
    let variants: Vec<_> = sets.iter().flat_map(|s| &s.variants).collect();
    write_tagged_lines(&args.out, &variants, &hash)
}

/// Parses `r=0.9[,seed=N][,fail=wrong|invalid]`; a bare number is the rate.
fn parse_mock(spec: &str) -> Result<ResponderConfig, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--mock-oracle {spec:?}: {why}"));
    let mut rate = None;
    let mut seed = 0;
    let mut on_failure = FailureMode::UniformWrongChoice;
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').unwrap_or(("r", part));
        match key.trim() {
            "r" => rate = Some(value.trim().parse::<f64>().map_err(|_| bad("r must be a number"))?),
            "seed" => seed = value.trim().parse().map_err(|_| bad("seed must be an integer"))?,
            "fail" => {
                on_failure = match value.trim() {
                    "wrong" => FailureMode::UniformWrongChoice,
                    "invalid" => FailureMode::Invalid,
                    _ => return Err(bad("fail must be `wrong` or `invalid`")),
                }
            }
            other => return Err(bad(&format!("unknown key {other:?}"))),
        }
    }
    let success_rate = rate.ok_or_else(|| bad("missing r"))?;
    if !(0.0..=1.0).contains(&success_rate) {
        return Err(bad("r must lie in [0, 1]"));
    }
    Ok(ResponderConfig::MockOracle {
        success_rate,
        seed,
        on_failure,
    })
}

fn manifest_from_flags(args: &RunArgs) -> Result<RunManifest, CliError> {
    let benchmark = args
        .benchmark
        .as_deref()
        .ok_or_else(|| CliError::Usage("--benchmark is required".into()))?;
    let responder = match (&args.mock_oracle, &args.endpoint_url) {
        (Some(spec), _) => parse_mock(spec)?,
        (None, Some(url)) => {
            let model = args
                .model
                .clone()
                .ok_or_else(|| CliError::Usage("--endpoint-url requires --model".into()))?;
            if !(args.timeout_secs.is_finite() && args.timeout_secs > 0.0) {
                return Err(CliError::Usage("--timeout-secs must be positive".into()));
            }
            let mut endpoint = ModelEndpoint::new(url.clone(), model);
            endpoint.auth_token_env_name = args.token_env.clone();
            endpoint.temperature = args.temperature;
            endpoint.max_tokens = args.max_tokens;
            endpoint.timeout = Duration::from_secs_f64(args.timeout_secs);
            endpoint.max_retries = args.max_retries;
            endpoint.max_in_flight = args.max_in_flight;
            ResponderConfig::Endpoint(endpoint)
        }
        (None, None) => return Err(CliError::Usage("one of --endpoint-url or --mock-oracle is required".into())),
    };
    let template = match &args.prompt_template {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let alphabet = args.alphabet.as_deref().unwrap_or(DEFAULT_ALPHABET);
    let prompt = PromptConfig::new(template, alphabet, args.shots).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.shots > 0 && args.fewshot.is_none() {
        return Err(CliError::Usage("--shots requires --fewshot".into()));
    }
    Ok(RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        benchmark: file_ref(benchmark)?,
        fewshot: args.fewshot.as_deref().map(file_ref).transpose()?,
        seed: args.seed,
        responder,
        prompt: PromptSettings::from_config(&prompt),
        variation: variation_config(&args.variation),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let manifest = match &args.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<RunManifest>(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => manifest_from_flags(args)?,
    };
    if let Some(path) = &args.write_manifest {
        write_json(path, &manifest)?;
    }
    let hash = manifest.hash();
    let label = responder_label(&manifest).map_err(|e| CliError::Usage(e.to_string()))?;
    let prepared = prepare(&manifest)?;
    let mut cache = match &args.cache {
        Some(path) => ResponseCache::open(path).map_err(|e| CliError::data(e.to_string()))?,
        None => ResponseCache::in_memory(),
    };
    let opts = RunOptions {
        max_in_flight: args.max_in_flight.max(1),
    };
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::data(format!("runtime: {e}")))?;
    let result = runtime.block_on(execute(&manifest, &prepared, &mut cache, &opts));

    let write_records = |records: &[ResponseRecord]| match &args.records {
        Some(path) => write_tagged_lines(path, records, &hash),
        None => Ok(()),
    };
    match result {
        Ok(out) => {
            write_records(&out.records)?;
            write_json(&args.out, &MatrixArtifact::new(label, manifest, Some(out.matrix), false))?;
            let status = json!({
                "matrix": args.out.display().to_string(),
                "manifest_hash": hash,
                "questions": prepared.bench.len(),
                "responses": out.records.len(),
                "endpoint_calls": out.endpoint_calls,
                "cache_hits": out.cache_hits,
            });
            emit(None, &format!("{status}\n"))
        }
        Err(e) => {
            if let PipelineError::Run(RunError::Query { completed, .. }) = &e {
                write_records(completed)?;
                let matrix = partial_matrix(&prepared.bench, &prepared.sets, completed);
                write_json(&args.out, &MatrixArtifact::new(label, manifest, matrix, true))?;
            }
            Err(e.into())
        }
    }
}

struct LoadedMatrix {
    label: String,
    manifest_hash: String,
    matrix: EvaluationMatrix,
}

fn load_matrices(inputs: &MatrixInputs) -> Result<Vec<LoadedMatrix>, CliError> {
    if !inputs.label.is_empty() && inputs.label.len() != inputs.matrix.len() {
        return Err(CliError::Usage(format!(
            "{} labels given for {} matrices",
            inputs.label.len(),
            inputs.matrix.len()
        )));
    }
    inputs
        .matrix
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let artifact: MatrixArtifact =
                serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let matrix = match (artifact.incomplete, artifact.matrix) {
                (false, Some(m)) => m,
                _ => {
                    return Err(CliError::Data {
                        message: format!("{}: matrix is marked incomplete", path.display()),
                        details: json!({ "path": path.display().to_string(), "incomplete": true }),
                    })
                }
            };
            Ok(LoadedMatrix {
                label: inputs.label.get(i).cloned().unwrap_or(artifact.label),
                manifest_hash: artifact.manifest_hash,
                matrix,
            })
        })
        .collect()
}

fn metric_options(opts: &ScoreOptions) -> MetricOptions {
    MetricOptions {
        include_original: !opts.exclude_original,
        averaging: if opts.macro_average {
            Averaging::Macro
        } else {
            Averaging::Pooled
        },
    }
}

fn score_report(m: &EvaluationMatrix, opts: &ScoreOptions) -> Result<MetricReport, CliError> {
    if let Some(c) = opts.bmca_sweep.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(CliError::Usage(format!("--bmca-sweep value {c} outside [0, 1]")));
    }
    Ok(score(m, &opts.bmca_sweep, &metric_options(opts))?)
}

fn report_format(f: FormatArg) -> report::Format {
    match f {
        FormatArg::Md => report::Format::Md,
        FormatArg::Csv => report::Format::Csv,
        FormatArg::Json => report::Format::Json,
    }
}

fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let columns = load_matrices(&args.inputs)?
        .into_iter()
        .map(|m| {
            Ok(ReportColumn {
                report: score_report(&m.matrix, &args.scoring)?,
                label: m.label,
                manifest_hash: m.manifest_hash,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    emit(args.out.as_deref(), &report::render_scores(&columns, report_format(args.format)))
}

fn cmd_bootstrap(args: &BootstrapArgs) -> Result<(), CliError> {
    let cfg = BootstrapConfig {
        n_replicates: args.replicates,
        sample_size: args.sample_size,
        seed: args.seed,
        index_mode: if args.per_question {
            IndexMode::PerQuestion
        } else {
            IndexMode::SharedAcrossQuestions
        },
    };
    if cfg.n_replicates == 0 || cfg.sample_size == 0 {
        return Err(CliError::Usage("--replicates and --sample-size must be positive".into()));
    }
    let mut columns = Vec::new();
    let mut raw = Vec::new();
    for m in load_matrices(&args.inputs)? {
        let full = score(&m.matrix, &DEFAULT_BMCA_SWEEP, &MetricOptions::default())?;
        let reps = bootstrap_replicates(&m.matrix, &cfg)?;
        let summary = BootstrapSummary::from_replicates(cfg, mcqa(&m.matrix)?, &reps);
        raw.push((m.label.clone(), reps));
        columns.push(BootstrapColumn {
            label: m.label,
            manifest_hash: m.manifest_hash,
            full,
            summary,
        });
    }
    if let Some(path) = &args.replicates_csv {
        let borrowed: Vec<(&str, &[_])> = raw.iter().map(|(l, r)| (l.as_str(), r.as_slice())).collect();
        emit(Some(path), &report::replicates_csv(&borrowed))?;
    }
    let text = match args.format {
        FormatArg::Md => report::bootstrap_markdown(&columns),
        FormatArg::Csv => report::bootstrap_csv(&columns),
        FormatArg::Json => report::bootstrap_json(&columns),
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_guessing_table(args: &GuessingArgs) -> Result<(), CliError> {
    let rows = guessing_table(args.trials, args.choices, args.threshold)?;
    let params = GuessingParams {
        trials: args.trials,
        choices: args.choices,
        threshold: args.threshold,
    };
    let hash = parameter_hash("guessing-table", &serde_json::to_value(params)?);
    let text = match args.format {
        FormatArg::Md => report::guessing_markdown(&rows, &params, &hash),
        FormatArg::Csv => report::guessing_csv(&rows, &params),
        FormatArg::Json => report::guessing_json(&rows, &params, &hash),
    };
    emit(args.out.as_deref(), &text)
}

/// Keeps, per row, the columns of the same-cardinality families.
fn same_cardinality_matrix(m: &EvaluationMatrix, source: &Path) -> Result<EvaluationMatrix, CliError> {
    let masks = m
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let keep = same_cardinality_columns(row.len()).ok_or_else(|| CliError::Data {
                message: format!(
                    "{}: question {:?} has {} variants, which is not a full divergent set",
                    source.display(),
                    m.question_ids()[i],
                    row.len()
                ),
                details: json!({ "question_id": m.question_ids()[i], "variants": row.len() }),
            })?;
            let mut mask = vec![false; row.len()];
            keep.into_iter().for_each(|j| mask[j] = true);
            Ok(mask)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(m.select_columns(|i, j| masks[i][j])?)
}

fn cmd_ablation(args: &AblationArgs) -> Result<(), CliError> {
    let columns = load_matrices(&args.inputs)?
        .into_iter()
        .zip(&args.inputs.matrix)
        .map(|(m, path): (LoadedMatrix, &PathBuf)| {
            let filtered = same_cardinality_matrix(&m.matrix, path)?;
            Ok(AblationColumn {
                full: score_report(&m.matrix, &args.scoring)?,
                filtered: score_report(&filtered, &args.scoring)?,
                label: m.label,
                manifest_hash: m.manifest_hash,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let text = match args.format {
        FormatArg::Md => report::ablation_markdown(&columns),
        FormatArg::Csv => report::ablation_csv(&columns),
        FormatArg::Json => report::ablation_json(&columns),
    };
    emit(args.out.as_deref(), &text)
}
