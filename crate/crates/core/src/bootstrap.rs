//! Bootstrap resampling over the variant dimension of an evaluation matrix.
//!
//! Each replicate draws `sample_size` variant columns with replacement, rebuilds
//! every row's consistency from the drawn columns and recomputes MCQA+, MV, CI
//! and CoRA. MCQA itself is always the original-question score of the
//! unresampled matrix.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{ci_from, cora_from, mcqa, EvaluationMatrix};
use crate::seeding::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// One multiset of column indices per replicate, applied to every row.
    #[default]
    SharedAcrossQuestions,
    /// Each row draws its own indices.
    PerQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_replicates: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub index_mode: IndexMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_replicates: 10_000,
            sample_size: 100,
            seed: 0,
            index_mode: IndexMode::SharedAcrossQuestions,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BootstrapError {
    #[error("evaluation matrix has no rows")]
    Empty,
    #[error("shared index mode needs rows of equal length")]
    NonUniformRows,
    #[error("replicate count and sample size must both be at least 1")]
    BadConfig,
}

/// Scores of one bootstrap replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub mcqa_plus: f64,
    pub mv: f64,
    pub bmca_full: f64,
    pub ci: f64,
    pub cora: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        let mean = values.clone().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub config: BootstrapConfig,
    pub mcqa: f64,
    pub mcqa_plus: MeanStd,
    pub mv: MeanStd,
    pub bmca_full: MeanStd,
    pub ci: MeanStd,
    pub cora: MeanStd,
}

impl BootstrapSummary {
    pub fn from_replicates(config: BootstrapConfig, mcqa: f64, reps: &[Replicate]) -> Self {
        let it = |f: fn(&Replicate) -> f64| MeanStd::of(reps.iter().map(f));
        Self {
            config,
            mcqa,
            mcqa_plus: it(|r| r.mcqa_plus),
            mv: it(|r| r.mv),
            bmca_full: it(|r| r.bmca_full),
            ci: it(|r| r.ci),
            cora: it(|r| r.cora),
        }
    }
}

fn check(m: &EvaluationMatrix, cfg: &BootstrapConfig) -> Result<(), BootstrapError> {
    if m.is_empty() {
        return Err(BootstrapError::Empty);
    }
    if cfg.n_replicates == 0 || cfg.sample_size == 0 {
        return Err(BootstrapError::BadConfig);
    }
    if cfg.index_mode == IndexMode::SharedAcrossQuestions && m.uniform_width().is_none() {
        return Err(BootstrapError::NonUniformRows);
    }
    Ok(())
}

fn replicate(m: &EvaluationMatrix, cfg: &BootstrapConfig, base_mcqa: f64, index: usize) -> Replicate {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let s = cfg.sample_size;
    let rows = m.rows();
    let row_hits: Vec<usize> = match cfg.index_mode {
        IndexMode::SharedAcrossQuestions => {
            let width = rows[0].len();
            let mut counts = vec![0usize; width];
            for _ in 0..s {
                counts[rng.gen_range(0..width)] += 1;
            }
            rows.iter()
                .map(|r| r.iter().zip(&counts).filter(|(&b, _)| b).map(|(_, &c)| c).sum())
                .collect()
        }
        IndexMode::PerQuestion => rows
            .iter()
            .map(|r| (0..s).filter(|_| r[rng.gen_range(0..r.len())]).count())
            .collect(),
    };
    let n = rows.len() as f64;
    let total: usize = row_hits.iter().sum();
    let mv = row_hits.iter().filter(|&&h| 2 * h > s).count() as f64 / n;
    let bmca_full = row_hits.iter().filter(|&&h| h == s).count() as f64 / n;
    let ci = ci_from(base_mcqa, bmca_full);
    Replicate {
        mcqa_plus: total as f64 / (n * s as f64),
        mv,
        bmca_full,
        ci,
        cora: cora_from(base_mcqa, ci),
    }
}

/// All replicates in replicate order. Each replicate's generator depends only on
/// `(seed, replicate index)`, so the result does not depend on thread scheduling.
pub fn bootstrap_replicates(
    m: &EvaluationMatrix,
    cfg: &BootstrapConfig,
) -> Result<Vec<Replicate>, BootstrapError> {
    check(m, cfg)?;
    let base = mcqa(m).map_err(|_| BootstrapError::Empty)?;
    Ok((0..cfg.n_replicates)
        .into_par_iter()
        .map(|i| replicate(m, cfg, base, i))
        .collect())
}

pub fn bootstrap_metrics(
    m: &EvaluationMatrix,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary, BootstrapError> {
    let reps = bootstrap_replicates(m, cfg)?;
    let base = mcqa(m).map_err(|_| BootstrapError::Empty)?;
    Ok(BootstrapSummary::from_replicates(*cfg, base, &reps))
}
