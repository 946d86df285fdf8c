//! Accuracy and consistency scores over an [`EvaluationMatrix`].
//!
//! Row `i` of the matrix holds the correctness bits of question `i`'s divergent
//! set, with the unmodified original question first. Every score here is a
//! fraction of rows or of bits:
//!
//! * `mcqa`: mean of the original-question bits.
//! * `mcqa_plus`: mean over all bits (pooled by default).
//! * `rc(i)`: mean of row `i`.
//! * `mv`: fraction of rows with `rc > 0.5`.
//! * `bmca(c)`: fraction of rows with `rc >= c`.
//! * `ci`: `1 - (mcqa - bmca(1.0))`.
//! * `cora`: `mcqa * ci`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Slack used when comparing a row's consistency against a threshold, so that
/// `7/10 >= 0.7` holds regardless of how the threshold literal was produced.
const THRESHOLD_EPS: f64 = 1e-12;

pub const DEFAULT_BMCA_SWEEP: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("evaluation matrix has no rows")]
    Empty,
    #[error("row {0} has no scorable entries")]
    EmptyRow(usize),
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("{ids} question ids for {rows} rows")]
    Misaligned { ids: usize, rows: usize },
    #[error("consistency threshold {0} outside [0, 1]")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationMatrix {
    question_ids: Vec<String>,
    rows: Vec<Vec<bool>>,
}

impl EvaluationMatrix {
    pub fn new(question_ids: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self, MetricError> {
        if question_ids.len() != rows.len() {
            return Err(MetricError::Misaligned {
                ids: question_ids.len(),
                rows: rows.len(),
            });
        }
        if let Some(i) = rows.iter().position(Vec::is_empty) {
            return Err(MetricError::EmptyRow(i));
        }
        Ok(Self { question_ids, rows })
    }

    /// Matrix with ids `q0, q1, ...`; convenient for synthetic data.
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self, MetricError> {
        let ids = (0..rows.len()).map(|i| format!("q{i}")).collect();
        Self::new(ids, rows)
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `Some(M)` when every row has the same length.
    pub fn uniform_width(&self) -> Option<usize> {
        let first = self.rows.first()?.len();
        self.rows.iter().all(|r| r.len() == first).then_some(first)
    }

    /// Keeps the columns for which `keep(row, column)` holds.
    pub fn select_columns<F>(&self, mut keep: F) -> Result<Self, MetricError>
    where
        F: FnMut(usize, usize) -> bool,
    {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .filter(|&(j, _)| keep(i, j))
                    .map(|(_, &b)| b)
                    .collect()
            })
            .collect();
        Self::new(self.question_ids.clone(), rows)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    question_ids: Vec<String>,
    rows: Vec<String>,
}

impl Serialize for EvaluationMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr {
            question_ids: self.question_ids.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EvaluationMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        let rows = repr
            .rows
            .iter()
            .map(|r| {
                r.chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        other => Err(D::Error::custom(format!("invalid bit {other:?}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        EvaluationMatrix::new(repr.question_ids, rows).map_err(D::Error::custom)
    }
}

/// How MCQA+ aggregates when rows have different lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Total hits over total trials.
    #[default]
    Pooled,
    /// Mean of per-row means.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Whether the original question counts toward a row's consistency.
    pub include_original: bool,
    pub averaging: Averaging,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            include_original: true,
            averaging: Averaging::Pooled,
        }
    }
}

fn non_empty(m: &EvaluationMatrix) -> Result<(), MetricError> {
    if m.is_empty() {
        Err(MetricError::Empty)
    } else {
        Ok(())
    }
}

/// Entries of row `i` that count toward consistency.
fn scored<'a>(m: &'a EvaluationMatrix, i: usize, opts: &MetricOptions) -> Result<&'a [bool], MetricError> {
    let row = &m.rows[i];
    let slice = if opts.include_original { &row[..] } else { &row[1..] };
    if slice.is_empty() {
        Err(MetricError::EmptyRow(i))
    } else {
        Ok(slice)
    }
}

fn hits(bits: &[bool]) -> usize {
    bits.iter().filter(|&&b| b).count()
}

fn fraction_of_rows<F>(m: &EvaluationMatrix, opts: &MetricOptions, mut pred: F) -> Result<f64, MetricError>
where
    F: FnMut(usize, usize) -> bool,
{
    non_empty(m)?;
    let mut count = 0usize;
    for i in 0..m.num_rows() {
        let bits = scored(m, i, opts)?;
        if pred(hits(bits), bits.len()) {
            count += 1;
        }
    }
    Ok(count as f64 / m.num_rows() as f64)
}

pub fn mcqa(m: &EvaluationMatrix) -> Result<f64, MetricError> {
    non_empty(m)?;
    Ok(m.rows.iter().filter(|r| r[0]).count() as f64 / m.num_rows() as f64)
}

pub fn mcqa_plus(m: &EvaluationMatrix) -> Result<f64, MetricError> {
    mcqa_plus_with(m, &MetricOptions::default())
}

pub fn mcqa_plus_with(m: &EvaluationMatrix, opts: &MetricOptions) -> Result<f64, MetricError> {
    non_empty(m)?;
    match opts.averaging {
        Averaging::Pooled => {
            let (mut h, mut n) = (0usize, 0usize);
            for i in 0..m.num_rows() {
                let bits = scored(m, i, opts)?;
                h += hits(bits);
                n += bits.len();
            }
            Ok(h as f64 / n as f64)
        }
        Averaging::Macro => {
            let mut total = 0.0;
            for i in 0..m.num_rows() {
                total += rc_with(m, i, opts)?;
            }
            Ok(total / m.num_rows() as f64)
        }
    }
}

pub fn rc(m: &EvaluationMatrix, i: usize) -> Result<f64, MetricError> {
    rc_with(m, i, &MetricOptions::default())
}

pub fn rc_with(m: &EvaluationMatrix, i: usize, opts: &MetricOptions) -> Result<f64, MetricError> {
    if i >= m.num_rows() {
        return Err(MetricError::RowOutOfRange {
            index: i,
            rows: m.num_rows(),
        });
    }
    let bits = scored(m, i, opts)?;
    Ok(hits(bits) as f64 / bits.len() as f64)
}

pub fn mv(m: &EvaluationMatrix) -> Result<f64, MetricError> {
    mv_with(m, &MetricOptions::default())
}

/// Strict majority, evaluated on integer counts so exact halves never count.
pub fn mv_with(m: &EvaluationMatrix, opts: &MetricOptions) -> Result<f64, MetricError> {
    fraction_of_rows(m, opts, |h, n| 2 * h > n)
}

pub fn bmca(m: &EvaluationMatrix, c: f64) -> Result<f64, MetricError> {
    bmca_with(m, c, &MetricOptions::default())
}

pub fn bmca_with(m: &EvaluationMatrix, c: f64, opts: &MetricOptions) -> Result<f64, MetricError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(MetricError::BadThreshold(c));
    }
    fraction_of_rows(m, opts, |h, n| h as f64 / n as f64 >= c - THRESHOLD_EPS)
}

pub fn ci(m: &EvaluationMatrix) -> Result<f64, MetricError> {
    ci_with(m, &MetricOptions::default())
}

pub fn ci_with(m: &EvaluationMatrix, opts: &MetricOptions) -> Result<f64, MetricError> {
    Ok(ci_from(mcqa(m)?, bmca_with(m, 1.0, opts)?))
}

pub fn cora(m: &EvaluationMatrix) -> Result<f64, MetricError> {
    cora_with(m, &MetricOptions::default())
}

pub fn cora_with(m: &EvaluationMatrix, opts: &MetricOptions) -> Result<f64, MetricError> {
    let base = mcqa(m)?;
    Ok(cora_from(base, ci_from(base, bmca_with(m, 1.0, opts)?)))
}

/// Consistency index from already-computed MCQA and BMCA(1.0) scores.
pub fn ci_from(mcqa: f64, bmca_full: f64) -> f64 {
    1.0 - (mcqa - bmca_full)
}

pub fn cora_from(mcqa: f64, ci: f64) -> f64 {
    mcqa * ci
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmcaPoint {
    pub c: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mcqa: f64,
    pub mcqa_plus: f64,
    pub mv: f64,
    pub bmca_sweep: Vec<BmcaPoint>,
    /// BMCA at full consistency, which feeds CI.
    pub bmca_full: f64,
    pub ci: f64,
    pub cora: f64,
    pub per_question_rc: Vec<f64>,
}

impl MetricReport {
    pub fn bmca_at(&self, c: f64) -> Option<f64> {
        self.bmca_sweep
            .iter()
            .find(|p| (p.c - c).abs() < 1e-9)
            .map(|p| p.score)
    }
}

pub fn score(m: &EvaluationMatrix, sweep: &[f64], opts: &MetricOptions) -> Result<MetricReport, MetricError> {
    let base = mcqa(m)?;
    let bmca_full = bmca_with(m, 1.0, opts)?;
    let ci = ci_from(base, bmca_full);
    let mut bmca_sweep = Vec::with_capacity(sweep.len());
    for &c in sweep {
        bmca_sweep.push(BmcaPoint {
            c,
            score: bmca_with(m, c, opts)?,
        });
    }
    let per_question_rc = (0..m.num_rows())
        .map(|i| rc_with(m, i, opts))
        .collect::<Result<_, _>>()?;
    Ok(MetricReport {
        mcqa: base,
        mcqa_plus: mcqa_plus_with(m, opts)?,
        mv: mv_with(m, opts)?,
        bmca_sweep,
        bmca_full,
        ci,
        cora: cora_from(base, ci),
        per_question_rc,
    })
}
