//! Binomial analysis of guessing: how likely is a model that guesses with
//! per-trial success rate `r` to get at least `p` of `M` repeated trials right,
//! and what rate is needed to do so reliably.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default confidence for "reliably reaches at least `p` correct".
pub const DEFAULT_THRESHOLD: f64 = 0.999;

/// Bisection stops once the bracket is narrower than this.
pub const MSGR_TOLERANCE: f64 = 1e-6;

/// Reference rate column for `M = 10`, `k = 5`, indexed by `p`.
pub const REFERENCE_MSGR_M10_K5: [f64; 11] = [
    0.2, 0.54, 0.66, 0.75, 0.82, 0.88, 0.93, 0.96, 0.98, 0.99, 0.9999,
];

#[derive(Debug, Error, PartialEq)]
pub enum GuessingError {
    #[error("p = {p} outside [{min}, {m}]")]
    CountOutOfRange { p: u64, min: u64, m: u64 },
    #[error("success rate {0} outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("threshold {0} must lie strictly between 0 and 1")]
    ThresholdOutOfRange(f64),
    #[error("C({m}, {p}) overflows 128-bit integers")]
    Overflow { m: u64, p: u64 },
    #[error("need at least 1 trial and 2 choices (got M = {m}, k = {k})")]
    BadTable { m: u64, k: u64 },
}

fn check_count(m: u64, p: u64) -> Result<(), GuessingError> {
    if p > m {
        Err(GuessingError::CountOutOfRange { p, min: 0, m })
    } else {
        Ok(())
    }
}

fn check_rate(r: f64) -> Result<(), GuessingError> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(GuessingError::RateOutOfRange(r))
    }
}

/// Exact `M! / ((M−p)! p!)`.
pub fn binom_coeff(m: u64, p: u64) -> Result<u128, GuessingError> {
    check_count(m, p)?;
    let k = p.min(m - p);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // acc * (m - k + i) is divisible by i at every step
        acc = acc
            .checked_mul(m as u128 - k as u128 + i)
            .ok_or(GuessingError::Overflow { m, p })?
            / i;
    }
    Ok(acc)
}

fn ln_binom(m: u64, p: u64) -> f64 {
    let k = p.min(m - p);
    (1..=k)
        .map(|i| ((m - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

fn exactly_unchecked(r: f64, m: u64, p: u64) -> f64 {
    if r == 0.0 {
        return if p == 0 { 1.0 } else { 0.0 };
    }
    if r == 1.0 {
        return if p == m { 1.0 } else { 0.0 };
    }
    (ln_binom(m, p) + p as f64 * r.ln() + (m - p) as f64 * (-r).ln_1p()).exp()
}

/// Probability of exactly `p` successes in `M` independent trials.
pub fn prob_exactly(r: f64, m: u64, p: u64) -> Result<f64, GuessingError> {
    check_rate(r)?;
    check_count(m, p)?;
    Ok(exactly_unchecked(r, m, p))
}

/// Probability of at least `p` successes in `M` independent trials.
pub fn prob_at_least(r: f64, m: u64, p: u64) -> Result<f64, GuessingError> {
    check_rate(r)?;
    check_count(m, p)?;
    if p == 0 {
        return Ok(1.0);
    }
    let tail: f64 = (p..=m).map(|j| exactly_unchecked(r, m, j)).sum();
    Ok(tail.min(1.0))
}

/// Smallest success rate `r` with `prob_at_least(r, M, p) >= threshold`,
/// found by bisection. The returned rate always satisfies the threshold.
pub fn msgr(p: u64, m: u64, threshold: f64) -> Result<f64, GuessingError> {
    if p == 0 || p > m {
        return Err(GuessingError::CountOutOfRange { p, min: 1, m });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GuessingError::ThresholdOutOfRange(threshold));
    }
    let tail = |r: f64| prob_at_least(r, m, p).expect("validated");
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > MSGR_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if tail(mid) >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessingTableRow {
    pub p: u64,
    /// `prob_at_least(1/k, M, p)`.
    pub random_tail: f64,
    pub msgr: f64,
    /// Reference rate for this row, when one exists for the table's `(M, k)`.
    pub reference_msgr: Option<f64>,
}

impl GuessingTableRow {
    pub fn deviation(&self) -> Option<f64> {
        self.reference_msgr.map(|r| self.msgr - r)
    }
}

/// One row per `p = 0..=M`. The `p = 0` row reports the pure-guess rate `1/k`
/// since every rate reaches zero correct answers.
pub fn guessing_table(m: u64, k: u64, threshold: f64) -> Result<Vec<GuessingTableRow>, GuessingError> {
    if m < 1 || k < 2 {
        return Err(GuessingError::BadTable { m, k });
    }
    let random = 1.0 / k as f64;
    let reference = (m == 10 && k == 5).then_some(&REFERENCE_MSGR_M10_K5);
    (0..=m)
        .map(|p| {
            let rate = if p == 0 { random } else { msgr(p, m, threshold)? };
            Ok(GuessingTableRow {
                p,
                random_tail: prob_at_least(random, m, p)?,
                msgr: rate,
                reference_msgr: reference.map(|r| r[p as usize]),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients() {
        assert_eq!(binom_coeff(10, 0).unwrap(), 1);
        assert_eq!(binom_coeff(10, 5).unwrap(), 252);
        assert_eq!(binom_coeff(10, 10).unwrap(), 1);
        assert!(binom_coeff(3, 4).is_err());
        // Pascal recurrence
        for m in 1..60u64 {
            for p in 1..m {
                assert_eq!(
                    binom_coeff(m, p).unwrap(),
                    binom_coeff(m - 1, p - 1).unwrap() + binom_coeff(m - 1, p).unwrap()
                );
            }
        }
        assert!(matches!(binom_coeff(200, 100), Err(GuessingError::Overflow { .. })));
    }

    #[test]
    fn exact_probabilities() {
        assert!((prob_exactly(0.2, 10, 10).unwrap() - 1.024e-7).abs() < 1e-18);
        assert_eq!(prob_exactly(1.0, 10, 9).unwrap(), 0.0);
        assert_eq!(prob_exactly(1.0, 10, 10).unwrap(), 1.0);
        assert_eq!(prob_exactly(0.0, 10, 0).unwrap(), 1.0);
        for r in [0.0, 0.01, 0.2, 0.5, 0.93, 1.0] {
            let total: f64 = (0..=10).map(|p| prob_exactly(r, 10, p).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "r={r} total={total}");
        }
        assert!(prob_exactly(1.2, 10, 1).is_err());
        assert!(prob_exactly(0.5, 10, 11).is_err());
    }

    #[test]
    fn large_m_does_not_underflow_to_nan() {
        let total: f64 = (0..=2000).map(|p| prob_exactly(0.3, 2000, p).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tails() {
        assert!((prob_at_least(0.2, 10, 1).unwrap() - (1.0 - 0.8f64.powi(10))).abs() < 1e-12);
        assert_eq!(format!("{:.3}", prob_at_least(0.2, 10, 1).unwrap()), "0.893");
        assert_eq!(format!("{:.3}", prob_at_least(0.2, 10, 3).unwrap()), "0.322");
        for r in [0.0, 0.3, 1.0] {
            assert_eq!(prob_at_least(r, 10, 0).unwrap(), 1.0);
        }
    }

    #[test]
    fn msgr_endpoints_and_inverse() {
        let top = msgr(10, 10, DEFAULT_THRESHOLD).unwrap();
        assert!(top >= 0.999 && (top - 0.9999).abs() < 5e-4);
        assert!((msgr(6, 10, DEFAULT_THRESHOLD).unwrap() - 0.93).abs() < 0.02);
        let mut prev = 0.0;
        for p in 1..=10 {
            let r = msgr(p, 10, DEFAULT_THRESHOLD).unwrap();
            assert!(r >= prev);
            prev = r;
            assert!(prob_at_least(r, 10, p).unwrap() >= DEFAULT_THRESHOLD);
            assert!(prob_at_least(r - 1e-5, 10, p).unwrap() < DEFAULT_THRESHOLD);
        }
        assert!(matches!(msgr(5, 10, 1.0), Err(GuessingError::ThresholdOutOfRange(_))));
        assert!(msgr(0, 10, 0.5).is_err());
    }

    #[test]
    fn table_shape() {
        let t = guessing_table(10, 5, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(t.len(), 11);
        assert_eq!(t[0].msgr, 0.2);
        assert_eq!(t[0].random_tail, 1.0);
        for w in t.windows(2) {
            assert!(w[1].random_tail <= w[0].random_tail);
            if w[0].p >= 1 {
                assert!(w[1].msgr >= w[0].msgr);
            }
        }
        assert!(t.iter().all(|r| r.deviation().is_some()));
        assert!(guessing_table(8, 4, 0.99).unwrap().iter().all(|r| r.reference_msgr.is_none()));
        assert!(guessing_table(0, 5, 0.99).is_err());
    }
}
