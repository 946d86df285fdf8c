//! Exact reference implementations shared by the integration suites.
#![allow(dead_code)]

use cora_core::metrics::{score, EvaluationMatrix, MetricOptions, MetricReport};
use num::rational::BigRational;
use num::{BigInt, One, ToPrimitive, Zero};

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite rational")
}

/// Metric values computed with exact fractions straight from the definitions.
#[derive(Debug)]
pub struct ExactScores {
    pub mcqa: BigRational,
    pub mcqa_plus: BigRational,
    pub mv: BigRational,
    /// `(c, BMCA(c))` for each threshold given in tenths.
    pub bmca: Vec<(i64, BigRational)>,
    pub ci: BigRational,
    pub cora: BigRational,
}

pub fn exact_scores(rows: &[Vec<bool>], tenths: &[i64]) -> ExactScores {
    let n = rows.len() as i64;
    let hits = |r: &Vec<bool>| r.iter().filter(|&&b| b).count() as i64;
    let frac_rows = |pred: &dyn Fn(i64, i64) -> bool| {
        ratio(rows.iter().filter(|r| pred(hits(r), r.len() as i64)).count() as i64, n)
    };
    let mcqa = ratio(rows.iter().filter(|r| r[0]).count() as i64, n);
    let total_hits: i64 = rows.iter().map(hits).sum();
    let total_len: i64 = rows.iter().map(|r| r.len() as i64).sum();
    let mcqa_plus = ratio(total_hits, total_len);
    let mv = frac_rows(&|h, len| 2 * h > len);
    let bmca = tenths
        .iter()
        .map(|&t| (t, frac_rows(&|h, len| 10 * h >= t * len)))
        .collect::<Vec<_>>();
    let full = frac_rows(&|h, len| h == len);
    let ci = BigRational::one() - (mcqa.clone() - full);
    let cora = mcqa.clone() * ci.clone();
    ExactScores {
        mcqa,
        mcqa_plus,
        mv,
        bmca,
        ci,
        cora,
    }
}

/// Largest absolute gap between the library's report and the exact scores.
pub fn max_gap(report: &MetricReport, exact: &ExactScores) -> f64 {
    let mut gap: f64 = 0.0;
    let mut check = |a: f64, b: &BigRational| gap = gap.max((a - to_f64(b)).abs());
    check(report.mcqa, &exact.mcqa);
    check(report.mcqa_plus, &exact.mcqa_plus);
    check(report.mv, &exact.mv);
    check(report.ci, &exact.ci);
    check(report.cora, &exact.cora);
    for (t, value) in &exact.bmca {
        let c = *t as f64 / 10.0;
        check(report.bmca_at(c).expect("threshold in sweep"), value);
    }
    gap
}

/// Every 0/1 matrix whose row lengths are `shape`.
pub fn all_matrices(shape: &[usize]) -> impl Iterator<Item = Vec<Vec<bool>>> + '_ {
    let bits: usize = shape.iter().sum();
    (0u64..1 << bits).map(move |code| {
        let mut k = 0;
        shape
            .iter()
            .map(|&len| {
                (0..len)
                    .map(|_| {
                        let b = code >> k & 1 == 1;
                        k += 1;
                        b
                    })
                    .collect()
            })
            .collect()
    })
}

/// Every row-length vector with `1..=max_rows` rows of length `1..=max_len`.
pub fn all_shapes(max_rows: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for n in 1..=max_rows {
        let mut shape = vec![1; n];
        loop {
            out.push(shape.clone());
            let Some(i) = shape.iter().position(|&l| l < max_len) else { break };
            shape[i] += 1;
            shape[..i].iter_mut().for_each(|l| *l = 1);
        }
    }
    out
}

pub const TENTHS: [i64; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Checks every matrix of every shape against the exact oracle; returns the
/// number of matrices checked and the worst gap.
pub fn exhaustive_check(max_rows: usize, max_len: usize) -> (usize, f64) {
    let sweep: Vec<f64> = TENTHS.iter().map(|&t| t as f64 / 10.0).collect();
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for shape in all_shapes(max_rows, max_len) {
        for rows in all_matrices(&shape) {
            let m = EvaluationMatrix::from_rows(rows.clone()).unwrap();
            let report = score(&m, &sweep, &MetricOptions::default()).unwrap();
            worst = worst.max(max_gap(&report, &exact_scores(&rows, &TENTHS)));
            count += 1;
        }
    }
    (count, worst)
}

/// `P(X >= p)` for `X ~ Binomial(m, r)` by summing over all `2^m` outcome strings.
pub fn enumerated_tail(r: &BigRational, m: u32, p: u32) -> BigRational {
    let q = BigRational::one() - r.clone();
    let mut total = BigRational::zero();
    for outcome in 0u64..1 << m {
        let ones = outcome.count_ones();
        if ones >= p {
            total += num::pow(r.clone(), ones as usize) * num::pow(q.clone(), (m - ones) as usize);
        }
    }
    total
}
