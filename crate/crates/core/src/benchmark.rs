//! Loading and validation of multiple-choice benchmarks stored as JSON lines.
//!
//! Each line is one record:
//!
//! ```json
//! {"id":"q1","question":"2+2?","choices":["3","4","5"],"answer_index":1,"subject":"math"}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// One benchmark item with a single correct choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCQuestion {
    pub id: String,
    #[serde(rename = "question")]
    pub stem: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl MCQuestion {
    pub fn num_choices(&self) -> usize {
        self.choices.len()
    }

    pub fn correct_choice(&self) -> &str {
        &self.choices[self.answer_index]
    }

    /// Indices of the distractors, in parent order.
    pub fn distractor_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.choices.len()).filter(move |&i| i != self.answer_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub questions: Vec<MCQuestion>,
    pub shot_count: usize,
    #[serde(default)]
    pub fewshot_pool: Option<Vec<MCQuestion>>,
}

impl Benchmark {
    pub fn new(name: impl Into<String>, questions: Vec<MCQuestion>) -> Self {
        Self {
            name: name.into(),
            questions,
            shot_count: 0,
            fewshot_pool: None,
        }
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn max_choices(&self) -> usize {
        self.questions
            .iter()
            .chain(self.fewshot_pool.iter().flatten())
            .map(MCQuestion::num_choices)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Jsonl,
}

/// A broken invariant found by [`validate_benchmark`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending question id, or `None` for benchmark-level rules.
    pub question_id: Option<String>,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    TooFewChoices(usize),
    AnswerOutOfRange { index: usize, len: usize },
    EmptyStem,
    EmptyChoice(usize),
    DuplicateChoice { first: usize, second: usize },
    DuplicateId,
    FewshotOverlap,
    NotEnoughShots { shots: usize, pool: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = &self.question_id {
            write!(f, "question {id:?}: ")?;
        }
        match &self.rule {
            Rule::TooFewChoices(n) => write!(f, "fewer than 2 choices ({n})"),
            Rule::AnswerOutOfRange { index, len } => {
                write!(f, "answer index out of range ({index} for {len} choices)")
            }
            Rule::EmptyStem => write!(f, "empty question stem"),
            Rule::EmptyChoice(i) => write!(f, "choice {i} is empty"),
            Rule::DuplicateChoice { first, second } => {
                write!(f, "choices {first} and {second} are identical")
            }
            Rule::DuplicateId => write!(f, "duplicate question id"),
            Rule::FewshotOverlap => write!(f, "few-shot exemplar also appears in the test set"),
            Rule::NotEnoughShots { shots, pool } => {
                write!(f, "shot count {shots} exceeds few-shot pool size {pool}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: question {id:?}: answer index out of range ({index} for {len} choices)")]
    AnswerOutOfRange {
        line: usize,
        id: String,
        index: usize,
        len: usize,
    },
    #[error("line {line}: duplicate question id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: question {id:?} has fewer than 2 choices ({count})")]
    TooFewChoices { line: usize, id: String, count: usize },
    #[error("line {line}: question {id:?} marks more than one correct answer")]
    MultipleAnswers { line: usize, id: String },
    #[error("invalid benchmark: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    question: String,
    choices: Vec<String>,
    answer_index: Value,
    #[serde(default)]
    subject: Option<String>,
}

fn parse_record(line_no: usize, line: &str) -> Result<MCQuestion, BenchmarkError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| BenchmarkError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let answer_index = match &raw.answer_index {
        Value::Number(n) => n.as_u64(),
        Value::Array(items) if items.len() > 1 => {
            return Err(BenchmarkError::MultipleAnswers {
                line: line_no,
                id: raw.id,
            })
        }
        Value::Array(items) if items.len() == 1 => items[0].as_u64(),
        _ => None,
    }
    .ok_or_else(|| BenchmarkError::Malformed {
        line: line_no,
        message: "answer_index must be a non-negative integer".into(),
    })? as usize;

    if raw.choices.len() < 2 {
        return Err(BenchmarkError::TooFewChoices {
            line: line_no,
            id: raw.id,
            count: raw.choices.len(),
        });
    }
    if answer_index >= raw.choices.len() {
        return Err(BenchmarkError::AnswerOutOfRange {
            line: line_no,
            id: raw.id,
            index: answer_index,
            len: raw.choices.len(),
        });
    }
    Ok(MCQuestion {
        id: raw.id,
        stem: raw.question,
        choices: raw.choices,
        answer_index,
        subject: raw.subject,
    })
}

/// Reads question records from a JSON-lines file, preserving file order.
/// Blank lines are skipped but still counted for error line numbers.
pub fn read_questions(path: &Path) -> Result<Vec<MCQuestion>, BenchmarkError> {
    let io_err = |source| BenchmarkError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut questions = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let q = parse_record(line_no, &line)?;
        if !seen.insert(q.id.clone()) {
            return Err(BenchmarkError::DuplicateId {
                line: line_no,
                id: q.id,
            });
        }
        questions.push(q);
    }
    Ok(questions)
}

/// Loads and validates a benchmark. The benchmark name is the file stem.
pub fn load_benchmark(path: &Path, format: Format) -> Result<Benchmark, BenchmarkError> {
    match format {
        Format::Jsonl => {}
    }
    let questions = read_questions(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bench = Benchmark::new(name, questions);
    let violations = validate_benchmark(&bench);
    if violations.is_empty() {
        Ok(bench)
    } else {
        Err(BenchmarkError::Invalid(violations))
    }
}

/// Attaches a few-shot pool and shot count, then revalidates.
pub fn with_fewshot(
    mut bench: Benchmark,
    pool: Vec<MCQuestion>,
    shot_count: usize,
) -> Result<Benchmark, BenchmarkError> {
    bench.fewshot_pool = Some(pool);
    bench.shot_count = shot_count;
    let violations = validate_benchmark(&bench);
    if violations.is_empty() {
        Ok(bench)
    } else {
        Err(BenchmarkError::Invalid(violations))
    }
}

pub fn validate_question(q: &MCQuestion) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule| {
        out.push(Violation {
            question_id: Some(q.id.clone()),
            rule,
        })
    };
    if q.stem.trim().is_empty() {
        push(Rule::EmptyStem);
    }
    let a = q.choices.len();
    if a < 2 {
        push(Rule::TooFewChoices(a));
    }
    if q.answer_index >= a {
        push(Rule::AnswerOutOfRange {
            index: q.answer_index,
            len: a,
        });
    }
    for (i, c) in q.choices.iter().enumerate() {
        if c.trim().is_empty() {
            push(Rule::EmptyChoice(i));
        }
    }
    // Only leading/trailing whitespace is normalised; inner whitespace is significant.
    for i in 0..a {
        for j in (i + 1)..a {
            let (ci, cj) = (q.choices[i].trim(), q.choices[j].trim());
            if !ci.is_empty() && ci == cj {
                push(Rule::DuplicateChoice { first: i, second: j });
            }
        }
    }
    out
}

/// Returns every broken invariant; an empty list means the benchmark is valid.
pub fn validate_benchmark(b: &Benchmark) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for q in &b.questions {
        if !ids.insert(q.id.as_str()) {
            out.push(Violation {
                question_id: Some(q.id.clone()),
                rule: Rule::DuplicateId,
            });
        }
        out.extend(validate_question(q));
    }
    let pool = b.fewshot_pool.as_deref().unwrap_or(&[]);
    let mut pool_ids = HashSet::new();
    for q in pool {
        if ids.contains(q.id.as_str()) {
            out.push(Violation {
                question_id: Some(q.id.clone()),
                rule: Rule::FewshotOverlap,
            });
        }
        if !pool_ids.insert(q.id.as_str()) {
            out.push(Violation {
                question_id: Some(q.id.clone()),
                rule: Rule::DuplicateId,
            });
        }
        out.extend(validate_question(q));
    }
    if b.shot_count > 0 && b.shot_count > pool.len() {
        out.push(Violation {
            question_id: None,
            rule: Rule::NotEnoughShots {
                shots: b.shot_count,
                pool: pool.len(),
            },
        });
    }
    out
}

/// Writes questions in the same line format [`read_questions`] accepts.
pub fn write_questions<W: Write>(mut w: W, questions: &[MCQuestion]) -> std::io::Result<()> {
    for q in questions {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
