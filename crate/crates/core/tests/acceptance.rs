//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};

use cora_core::benchmark::{write_questions, Benchmark, MCQuestion};
use cora_core::bootstrap::{bootstrap_metrics, BootstrapConfig, IndexMode};
use cora_core::gateway::{
    evaluate_run, FailureMode, MockOracle, PromptRequest, QueryError, Responder, ResponseCache, RunOptions,
};
use cora_core::guessing::{guessing_table, msgr, prob_at_least, DEFAULT_THRESHOLD};
use cora_core::manifest::{FileRef, MatrixArtifact, PromptSettings, ResponderConfig, RunManifest, TOOL_VERSION};
use cora_core::metrics::{bmca, ci_from, cora_from, score, EvaluationMatrix, MetricOptions, DEFAULT_BMCA_SWEEP};
use cora_core::pipeline::{execute, prepare, responder_label};
use cora_core::prompting::PromptConfig;
use cora_core::report::{self, format_tail, BootstrapColumn, GuessingParams, ReportColumn};
use cora_core::variation::{
    divergent_set_size, filter_same_cardinality, generate_divergent_set, same_cardinality_size, VariationConfig,
    DEFAULT_NOTA_TEXT,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

/// Published (MCQA, BMCA(1.0), CI, CoRA) per (benchmark, model) column.
const PUBLISHED: [(&str, &str, f64, f64, f64, f64); 16] = [
    ("MedQA", "GPT4o", 0.85, 0.73, 0.88, 0.74),
    ("MedQA", "MedL", 0.74, 0.18, 0.44, 0.32),
    ("MedQA", "BioML", 0.73, 0.31, 0.58, 0.42),
    ("MedQA", "BMist", 0.38, 0.11, 0.73, 0.28),
    ("MMLU", "Mist", 0.64, 0.33, 0.69, 0.44),
    ("MMLU", "Llam", 0.58, 0.15, 0.57, 0.33),
    ("MMLU", "Gran", 0.65, 0.38, 0.73, 0.47),
    ("MMLU", "DSeek", 0.52, 0.16, 0.64, 0.33),
    ("Arc-C", "Mist", 0.80, 0.52, 0.72, 0.58),
    ("Arc-C", "Llam", 0.72, 0.07, 0.35, 0.25),
    ("Arc-C", "Gran", 0.82, 0.61, 0.79, 0.65),
    ("Arc-C", "DSeek", 0.64, 0.23, 0.59, 0.38),
    ("TruthfulQA", "Mist", 0.41, 0.09, 0.68, 0.28),
    ("TruthfulQA", "Llam", 0.41, 0.08, 0.67, 0.27),
    ("TruthfulQA", "Gran", 0.34, 0.09, 0.75, 0.25),
    ("TruthfulQA", "DSeek", 0.34, 0.05, 0.71, 0.24),
];
const IDENTITY_TOLERANCE: f64 = 0.015;

fn metric_identities() -> Outcome {
    let mut worst_ci: f64 = 0.0;
    let mut worst_cora: f64 = 0.0;
    for (bench, model, mcqa, full, ci, cora) in PUBLISHED {
        let got_ci = ci_from(mcqa, full);
        let got_cora = cora_from(mcqa, got_ci);
        ensure!(
            (got_ci - ci).abs() <= IDENTITY_TOLERANCE && (got_cora - cora).abs() <= IDENTITY_TOLERANCE,
            "{model}/{bench}: CI {got_ci:.4} vs {ci}, CoRA {got_cora:.4} vs {cora}"
        );
        worst_ci = worst_ci.max((got_ci - ci).abs());
        worst_cora = worst_cora.max((got_cora - cora).abs());
    }
    Ok(format!(
        "{} columns, max |dCI| {worst_ci:.4}, max |dCoRA| {worst_cora:.4} (tolerance {IDENTITY_TOLERANCE})",
        PUBLISHED.len()
    ))
}

fn question(id: &str, a: usize, answer: usize) -> MCQuestion {
    MCQuestion {
        id: id.to_string(),
        stem: format!("Question {id}?"),
        choices: (0..a).map(|j| format!("{id} option {j}")).collect(),
        answer_index: answer,
        subject: None,
    }
}

fn count_law() -> Outcome {
    for a in 2..=12 {
        for answer in [0, a - 1] {
            let q = question(&format!("a{a}"), a, answer);
            let ds = generate_divergent_set(&q, a as u64, DEFAULT_NOTA_TEXT).map_err(|e| e.to_string())?;
            ensure!(ds.len() == 2 + 6 * (a - 1), "A={a}: divergent set has {} variants", ds.len());
            ensure!(ds.len() == divergent_set_size(a), "A={a}: size helper disagrees");
            let f = filter_same_cardinality(&ds, a);
            ensure!(f.len() == 2 + 2 * (a - 1), "A={a}: filtered set has {} variants", f.len());
            ensure!(f.len() == same_cardinality_size(a), "A={a}: filtered size helper disagrees");
        }
    }
    let ds = generate_divergent_set(&question("five", 5, 2), 1, DEFAULT_NOTA_TEXT).unwrap();
    let sizes = (ds.len(), filter_same_cardinality(&ds, 5).len());
    ensure!(sizes == (26, 10), "A=5 sizes {sizes:?}");
    Ok("A=2..12 exact; A=5 gives 26 and 10".into())
}

const PRINTED_RANDOM: [&str; 11] = [
    "1.000", "0.893", "0.624", "0.322", "0.121", "0.033", "0.006", "0.0009", "0.00008", "0.000004", "0.0000001",
];
const TAIL_TOLERANCE: f64 = 1e-12;

fn guessing_tails() -> Outcome {
    let rows = guessing_table(10, 5, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    for (row, printed) in rows.iter().zip(PRINTED_RANDOM) {
        ensure!(
            format_tail(row.random_tail) == printed,
            "p={}: printed {} vs {printed}",
            row.p,
            format_tail(row.random_tail)
        );
    }
    let r = common::ratio(1, 5);
    let mut worst: f64 = 0.0;
    for p in 0..=10u32 {
        let exact = common::to_f64(&common::enumerated_tail(&r, 10, p));
        let got = prob_at_least(0.2, 10, p as u64).map_err(|e| e.to_string())?;
        worst = worst.max((got - exact).abs());
    }
    ensure!(worst <= TAIL_TOLERANCE, "tail gap {worst:e} vs 2^10 enumeration");
    Ok(format!("random column verbatim; max gap to 2^10 enumeration {worst:.1e} (tolerance {TAIL_TOLERANCE:e})"))
}

const MSGR10_TARGET: f64 = 0.9999;
const MSGR10_TOLERANCE: f64 = 0.0005;
const MSGR6_TARGET: f64 = 0.93;
const MSGR6_TOLERANCE: f64 = 0.02;

fn msgr_endpoints() -> Outcome {
    let m10 = msgr(10, 10, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    let m6 = msgr(6, 10, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    ensure!(m10 >= 0.999, "msgr(10) = {m10}");
    ensure!((m10 - MSGR10_TARGET).abs() <= MSGR10_TOLERANCE, "msgr(10) = {m10}");
    ensure!((m6 - MSGR6_TARGET).abs() <= MSGR6_TOLERANCE, "msgr(6) = {m6}");
    let rows = guessing_table(10, 5, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    ensure!(rows.iter().all(|r| r.deviation().is_some()), "missing deviation");
    let params = GuessingParams {
        trials: 10,
        choices: 5,
        threshold: DEFAULT_THRESHOLD,
    };
    let md = report::guessing_markdown(&rows, &params, "-");
    let csv = report::guessing_csv(&rows, &params);
    ensure!(md.contains("deviation") && csv.lines().next().unwrap().contains("deviation"), "deviation column not emitted");
    for r in &rows {
        let cell = format!("{:+.4}", r.deviation().unwrap());
        ensure!(md.contains(&cell) && csv.contains(&cell), "deviation {cell} for p={} not emitted", r.p);
    }
    let worst = rows.iter().map(|r| r.deviation().unwrap().abs()).fold(0.0, f64::max);
    Ok(format!(
        "tau {DEFAULT_THRESHOLD}: msgr(10) {m10:.5}, msgr(6) {m6:.4}; deviations emitted per row (largest {worst:.4})"
    ))
}

const MC_QUESTIONS: usize = 10_000;
const MC_SIGMAS: f64 = 3.0;

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap()
        .block_on(f)
}

fn monte_carlo() -> Outcome {
    let questions: Vec<MCQuestion> = (0..MC_QUESTIONS).map(|i| question(&format!("mc{i}"), 5, i % 5)).collect();
    let bench = Benchmark::new("mc", questions);
    let sets: Vec<_> = bench
        .questions
        .iter()
        .map(|q| filter_same_cardinality(&generate_divergent_set(q, 11, DEFAULT_NOTA_TEXT).unwrap(), 5))
        .collect();
    let cfg = PromptConfig::default();
    let mut worst_z: f64 = 0.0;
    for (k, r) in [0.2, 0.8, 0.93].into_iter().enumerate() {
        let oracle = MockOracle::new(r, 100 + k as u64, FailureMode::UniformWrongChoice).unwrap();
        let mut cache = ResponseCache::in_memory();
        let out = block_on(evaluate_run(&bench, &sets, &oracle, &cfg, &[], &mut cache, &RunOptions::default()))
            .map_err(|e| e.to_string())?;
        ensure!(out.endpoint_calls == MC_QUESTIONS * 10, "r={r}: {} distinct prompts", out.endpoint_calls);
        let hits: Vec<usize> = out.matrix.rows().iter().map(|row| row.iter().filter(|&&b| b).count()).collect();
        for p in 0..=10u64 {
            let expected = prob_at_least(r, 10, p).unwrap();
            let observed = hits.iter().filter(|&&h| h as u64 >= p).count() as f64 / MC_QUESTIONS as f64;
            let se = (expected * (1.0 - expected) / MC_QUESTIONS as f64).sqrt();
            let gap = (observed - expected).abs();
            ensure!(
                gap <= MC_SIGMAS * se || gap == 0.0,
                "r={r} p={p}: observed {observed} expected {expected:.6} (se {se:.2e})"
            );
            if se > 0.0 {
                worst_z = worst_z.max(gap / se);
            }
        }
    }
    Ok(format!("r in {{0.2, 0.8, 0.93}}, {MC_QUESTIONS} questions x 10 variants; worst |z| {worst_z:.2} (limit {MC_SIGMAS})"))
}

fn arb_matrix() -> impl Strategy<Value = EvaluationMatrix> {
    prop::collection::vec(prop::collection::vec(any::<bool>(), 1..30), 1..40)
        .prop_map(|rows| EvaluationMatrix::from_rows(rows).unwrap())
}

const PROPERTY_CASES: u32 = 1000;
const ORACLE_TOLERANCE: f64 = 1e-12;

fn property_suites() -> Outcome {
    let runner = || {
        TestRunner::new_with_rng(
            Config {
                cases: PROPERTY_CASES,
                failure_persistence: None,
                ..Config::default()
            },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        )
    };
    runner()
        .run(&(arb_matrix(), 0.0f64..=1.0, 0.0f64..=1.0), |(m, a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bmca(&m, lo).unwrap() >= bmca(&m, hi).unwrap());
            for w in DEFAULT_BMCA_SWEEP.windows(2) {
                prop_assert!(bmca(&m, w[0]).unwrap() >= bmca(&m, w[1]).unwrap());
            }
            Ok(())
        })
        .map_err(|e| format!("bmca monotonicity: {e}"))?;
    runner()
        .run(&arb_matrix(), |m| {
            let r = score(&m, &DEFAULT_BMCA_SWEEP, &MetricOptions::default()).unwrap();
            prop_assert!(r.bmca_full <= r.mcqa);
            prop_assert!(r.cora <= r.mcqa);
            let half = r.bmca_at(0.5).unwrap();
            prop_assert!(r.mv <= half);
            let ties = m.rows().iter().any(|row| 2 * row.iter().filter(|&&b| b).count() == row.len());
            if !ties {
                prop_assert_eq!(r.mv, half);
            }
            Ok(())
        })
        .map_err(|e| format!("orderings: {e}"))?;
    let (count, worst) = common::exhaustive_check(3, 3);
    ensure!(worst <= ORACLE_TOLERANCE, "exhaustive oracle gap {worst:e}");
    Ok(format!(
        "{PROPERTY_CASES} random matrices per property; {count} matrices with N<=3, M<=3 match the exact oracle (max gap {worst:.1e})"
    ))
}

const BOOT_ROWS: usize = 1273;
const BOOT_WIDTH: usize = 26;
const BOOT_MEAN_TOLERANCE: f64 = 0.01;
const BOOT_STD_LIMIT: f64 = 0.03;

/// Rows from a mixture of consistent, shaky, and guessing behaviour.
fn mixed_consistency_matrix(seed: u64) -> EvaluationMatrix {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..BOOT_ROWS)
        .map(|_| {
            let u: f64 = rng.gen();
            let rate = match u {
                u if u < 0.35 => 1.0,
                u if u < 0.60 => 0.95,
                u if u < 0.80 => 0.7,
                _ => 0.3,
            };
            (0..BOOT_WIDTH).map(|_| rng.gen_bool(rate)).collect()
        })
        .collect();
    EvaluationMatrix::from_rows(rows).unwrap()
}

fn bootstrap_stability() -> Outcome {
    let m = mixed_consistency_matrix(2024);
    let full = score(&m, &DEFAULT_BMCA_SWEEP, &MetricOptions::default()).unwrap();
    let cfg = BootstrapConfig {
        n_replicates: 10_000,
        sample_size: 100,
        seed: 7,
        ..BootstrapConfig::default()
    };
    let s = bootstrap_metrics(&m, &cfg).map_err(|e| e.to_string())?;
    let mut worst_delta: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for (name, ms, value) in [
        ("MCQA+", s.mcqa_plus, full.mcqa_plus),
        ("MV", s.mv, full.mv),
        ("CoRA", s.cora, full.cora),
    ] {
        let delta = (ms.mean - value).abs();
        ensure!(delta <= BOOT_MEAN_TOLERANCE, "{name}: mean {:.4} vs full {value:.4}", ms.mean);
        ensure!(ms.std < BOOT_STD_LIMIT, "{name}: std {:.4}", ms.std);
        worst_delta = worst_delta.max(delta);
        worst_std = worst_std.max(ms.std);
    }
    Ok(format!(
        "{BOOT_ROWS}x{BOOT_WIDTH}, 10000x100: max |mean - full| {worst_delta:.4} (tolerance {BOOT_MEAN_TOLERANCE}), max std {worst_std:.4} (limit {BOOT_STD_LIMIT})"
    ))
}

struct Counting {
    inner: MockOracle,
    calls: AtomicUsize,
}

impl Responder for Counting {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    async fn respond(&self, request: &PromptRequest<'_>) -> Result<String, QueryError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.respond(request).await
    }
}

/// Every artifact a run produces, rendered to bytes.
fn run_artifacts(manifest: &RunManifest, cache: &mut ResponseCache) -> Result<(Vec<u8>, String, usize), String> {
    let prepared = prepare(manifest).map_err(|e| e.to_string())?;
    let out = block_on(execute(manifest, &prepared, cache, &RunOptions { max_in_flight: 4 })).map_err(|e| e.to_string())?;
    let label = responder_label(manifest).map_err(|e| e.to_string())?;
    let artifact = MatrixArtifact::new(label.clone(), manifest.clone(), Some(out.matrix.clone()), false);
    let matrix_bytes = serde_json::to_vec_pretty(&artifact).unwrap();
    let full = score(&out.matrix, &DEFAULT_BMCA_SWEEP, &MetricOptions::default()).unwrap();
    let col = ReportColumn {
        label: label.clone(),
        manifest_hash: artifact.manifest_hash.clone(),
        report: full.clone(),
    };
    let boot_cfg = BootstrapConfig {
        n_replicates: 500,
        index_mode: IndexMode::PerQuestion,
        ..BootstrapConfig::default()
    };
    let boot = BootstrapColumn {
        label,
        manifest_hash: artifact.manifest_hash,
        full,
        summary: bootstrap_metrics(&out.matrix, &boot_cfg).map_err(|e| e.to_string())?,
    };
    let reports = [
        report::score_markdown(std::slice::from_ref(&col)),
        report::score_csv(std::slice::from_ref(&col)),
        report::score_json(std::slice::from_ref(&col)),
        report::bootstrap_markdown(std::slice::from_ref(&boot)),
    ]
    .concat();
    Ok((matrix_bytes, reports, out.endpoint_calls))
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bench_path = dir.path().join("bench.jsonl");
    let questions: Vec<MCQuestion> = (0..40).map(|i| question(&format!("e{i}"), 2 + i % 4, i % 2)).collect();
    write_questions(std::fs::File::create(&bench_path).unwrap(), &questions).unwrap();
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        benchmark: FileRef::of(&bench_path).unwrap(),
        fewshot: None,
        seed: 31,
        responder: ResponderConfig::MockOracle {
            success_rate: 0.8,
            seed: 5,
            on_failure: FailureMode::UniformWrongChoice,
        },
        prompt: PromptSettings::from_config(&PromptConfig::default()),
        variation: VariationConfig::default(),
    };

    let cache_a = dir.path().join("a.jsonl");
    let cache_b = dir.path().join("b.jsonl");
    let (matrix_a, reports_a, calls_a) = run_artifacts(&manifest, &mut ResponseCache::open(&cache_a).unwrap())?;
    let (matrix_b, reports_b, _) = run_artifacts(&manifest, &mut ResponseCache::open(&cache_b).unwrap())?;
    ensure!(matrix_a == matrix_b, "matrices differ between fresh runs");
    ensure!(reports_a == reports_b, "reports differ between fresh runs");
    ensure!(calls_a > 0, "first run made no calls");

    let (matrix_c, reports_c, calls_c) = run_artifacts(&manifest, &mut ResponseCache::open(&cache_a).unwrap())?;
    ensure!(calls_c == 0, "warm run dispatched {calls_c} prompts");
    ensure!(matrix_c == matrix_a && reports_c == reports_a, "warm run output differs");

    // Count responder invocations directly, independent of the driver's bookkeeping.
    let prepared = prepare(&manifest).map_err(|e| e.to_string())?;
    let ResponderConfig::MockOracle { success_rate, seed, on_failure } = manifest.responder else { unreachable!() };
    let counting = Counting {
        inner: MockOracle::new(success_rate, seed, on_failure).unwrap(),
        calls: AtomicUsize::new(0),
    };
    let mut warm = ResponseCache::open(&cache_a).unwrap();
    block_on(evaluate_run(
        &prepared.bench,
        &prepared.sets,
        &counting,
        &prepared.prompt,
        &prepared.fewshot,
        &mut warm,
        &RunOptions::default(),
    ))
    .map_err(|e| e.to_string())?;
    let observed = counting.calls.load(Ordering::SeqCst);
    ensure!(observed == 0, "responder called {observed} times against a warm cache");
    Ok(format!(
        "two fresh runs byte-identical ({} matrix bytes, {} report bytes); warm cache: 0 of {calls_a} calls",
        matrix_a.len(),
        reports_a.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("metric identities from published sub-scores", metric_identities),
        ("variant count law", count_law),
        ("guessing table random column and exact tails", guessing_tails),
        ("MSGR endpoints", msgr_endpoints),
        ("Monte Carlo vs closed form", monte_carlo),
        ("property suites and exhaustive small-matrix oracle", property_suites),
        ("bootstrap stability", bootstrap_stability),
        ("end-to-end determinism and warm cache", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
