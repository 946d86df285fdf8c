//! Table renderers for metric, bootstrap, ablation and guessing reports.
//!
//! Every renderer derives its printed numbers from [`round2`] (or
//! [`format_tail`] for guessing probabilities), so Markdown, CSV and JSON
//! always agree on rounded values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bootstrap::BootstrapSummary;
use crate::guessing::GuessingTableRow;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Md,
    Csv,
    Json,
}

/// One model's scores, as a table column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub label: String,
    pub manifest_hash: String,
    pub report: MetricReport,
}

/// Two-decimal rendering shared by every emitter. Never prints `-0.00`.
pub fn round2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn rounded(x: f64) -> f64 {
    round2(x).parse().expect("round2 yields a number")
}

/// Descending competition ranks ("1224") on two-decimal values, so scores
/// that print identically share a rank.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    let r: Vec<f64> = values.iter().map(|&v| rounded(v)).collect();
    r.iter()
        .map(|&v| 1 + r.iter().filter(|&&o| o > v).count())
        .collect()
}

/// Probability rendering for the random-guessing column: three decimals, or a
/// single significant digit once the value drops below 0.001.
pub fn format_tail(x: f64) -> String {
    if x >= 0.001 || x <= 0.0 {
        return format!("{x:.3}");
    }
    let decimals = (-x.log10()).ceil() as usize;
    format!("{x:.decimals$}")
}

struct Row {
    name: String,
    values: Vec<f64>,
    ranked: bool,
}

fn score_rows(cols: &[ReportColumn]) -> (Vec<Row>, Vec<Row>, Row) {
    let pick = |f: &dyn Fn(&MetricReport) -> f64| cols.iter().map(|c| f(&c.report)).collect::<Vec<_>>();
    let ranked = |name: &str, values| Row { name: name.into(), values, ranked: true };
    let baselines = vec![
        ranked("MCQA", pick(&|r| r.mcqa)),
        ranked("MCQA+", pick(&|r| r.mcqa_plus)),
        ranked("MV", pick(&|r| r.mv)),
        ranked("CoRA", pick(&|r| r.cora)),
    ];
    let sweep_cs: Vec<f64> = cols
        .first()
        .map(|c| c.report.bmca_sweep.iter().map(|p| p.c).collect())
        .unwrap_or_default();
    let sweep = sweep_cs
        .iter()
        .map(|&c| Row {
            name: format!("BMCA(c>={c:.1})"),
            values: pick(&|r| r.bmca_at(c).unwrap_or(f64::NAN)),
            ranked: false,
        })
        .collect();
    let ci = Row { name: "CI".into(), values: pick(&|r| r.ci), ranked: false };
    (baselines, sweep, ci)
}

fn cell(row: &Row, ranks: &[usize], j: usize) -> String {
    if row.ranked {
        format!("{} ({})", round2(row.values[j]), ranks[j])
    } else {
        round2(row.values[j])
    }
}

fn md_header(out: &mut String, labels: &[&str]) {
    let _ = writeln!(out, "| LLMs: | {} |", labels.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(labels.len()));
}

fn md_section(out: &mut String, title: &str, width: usize) {
    let _ = writeln!(out, "| **{title}** |{}", " |".repeat(width));
}

fn md_rows(out: &mut String, rows: &[Row]) {
    for row in rows {
        let ranks = competition_ranks(&row.values);
        let cells: Vec<String> = (0..row.values.len()).map(|j| cell(row, &ranks, j)).collect();
        let _ = writeln!(out, "| {} | {} |", row.name, cells.join(" | "));
    }
}

fn md_manifests<'a>(out: &mut String, items: impl Iterator<Item = (&'a str, &'a str)>) {
    out.push('\n');
    for (label, hash) in items {
        let _ = writeln!(out, "- {label}: manifest `{hash}`");
    }
}

/// Metrics as rows and models as columns, with ranks in parentheses for the
/// headline metrics.
pub fn score_markdown(cols: &[ReportColumn]) -> String {
    let (baselines, sweep, ci) = score_rows(cols);
    let labels: Vec<&str> = cols.iter().map(|c| c.label.as_str()).collect();
    let mut out = String::new();
    md_header(&mut out, &labels);
    md_section(&mut out, "Baselines", labels.len());
    md_rows(&mut out, &baselines[..3]);
    md_section(&mut out, "Proposed metric", labels.len());
    md_rows(&mut out, &baselines[3..]);
    md_section(&mut out, "Secondary metrics", labels.len());
    md_rows(&mut out, &sweep);
    md_rows(&mut out, std::slice::from_ref(&ci));
    md_manifests(&mut out, cols.iter().map(|c| (c.label.as_str(), c.manifest_hash.as_str())));
    out
}

fn csv_line(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = fields
        .into_iter()
        .map(|f| {
            if f.contains([',', '"', '\n']) {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f
            }
        })
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

pub fn score_csv(cols: &[ReportColumn]) -> String {
    let (baselines, sweep, ci) = score_rows(cols);
    let mut out = csv_line(std::iter::once("metric".to_string()).chain(cols.iter().map(|c| c.label.clone())));
    for row in baselines.iter().chain(&sweep).chain(std::iter::once(&ci)) {
        out += &csv_line(std::iter::once(row.name.clone()).chain(row.values.iter().map(|&v| round2(v))));
    }
    out += &csv_line(std::iter::once("manifest_hash".to_string()).chain(cols.iter().map(|c| c.manifest_hash.clone())));
    out
}

pub fn score_json(cols: &[ReportColumn]) -> String {
    let (baselines, sweep, ci) = score_rows(cols);
    let all: Vec<&Row> = baselines.iter().chain(&sweep).chain(std::iter::once(&ci)).collect();
    let columns: Vec<_> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let rows: Vec<_> = all
                .iter()
                .map(|row| {
                    let mut entry = json!({ "metric": row.name, "value": rounded(row.values[j]) });
                    if row.ranked {
                        entry["rank"] = json!(competition_ranks(&row.values)[j]);
                    }
                    entry
                })
                .collect();
            json!({
                "label": c.label,
                "manifest_hash": c.manifest_hash,
                "rounded": rows,
                "full": c.report,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({ "columns": columns })).expect("json serializes");
    s.push('\n');
    s
}

pub fn render_scores(cols: &[ReportColumn], format: Format) -> String {
    match format {
        Format::Md => score_markdown(cols),
        Format::Csv => score_csv(cols),
        Format::Json => score_json(cols),
    }
}

/// One model's bootstrap results next to its full-set scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapColumn {
    pub label: String,
    pub manifest_hash: String,
    pub full: MetricReport,
    pub summary: BootstrapSummary,
}

/// `(mean, std, full-set value)` of one metric.
type BootGet = fn(&BootstrapColumn) -> (f64, f64, f64);
const BOOTSTRAP_METRICS: [(&str, BootGet); 3] = [
    ("MCQA+", |c| (c.summary.mcqa_plus.mean, c.summary.mcqa_plus.std, c.full.mcqa_plus)),
    ("MV", |c| (c.summary.mv.mean, c.summary.mv.std, c.full.mv)),
    ("CoRA", |c| (c.summary.cora.mean, c.summary.cora.std, c.full.cora)),
];

fn delta(x: f64) -> String {
    round2(x)
}

/// Bootstrap means with the standard deviation ×10³ in parentheses, then the
/// difference of each mean to the full-set score.
pub fn bootstrap_markdown(cols: &[BootstrapColumn]) -> String {
    let labels: Vec<&str> = cols.iter().map(|c| c.label.as_str()).collect();
    let mut out = String::new();
    md_header(&mut out, &labels);
    let (reps, size) = cols
        .first()
        .map(|c| (c.summary.config.n_replicates, c.summary.config.sample_size))
        .unwrap_or_default();
    md_section(
        &mut out,
        &format!("Means of {reps} resamplings of {size} variants (std x 10^3)"),
        labels.len(),
    );
    for (name, get) in BOOTSTRAP_METRICS {
        let cells: Vec<String> = cols
            .iter()
            .map(|c| {
                let (mean, std, _) = get(c);
                format!("{} ({})", round2(mean), (std * 1e3).round() as i64)
            })
            .collect();
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    md_section(&mut out, "Difference to full set", labels.len());
    for (name, get) in BOOTSTRAP_METRICS {
        let cells: Vec<String> = cols
            .iter()
            .map(|c| {
                let (mean, _, full) = get(c);
                delta(mean - full)
            })
            .collect();
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    md_manifests(&mut out, cols.iter().map(|c| (c.label.as_str(), c.manifest_hash.as_str())));
    out
}

pub fn bootstrap_csv(cols: &[BootstrapColumn]) -> String {
    let mut out = csv_line(std::iter::once("metric".to_string()).chain(cols.iter().map(|c| c.label.clone())));
    for (name, get) in BOOTSTRAP_METRICS {
        out += &csv_line(std::iter::once(format!("{name} mean")).chain(cols.iter().map(|c| round2(get(c).0))));
        out += &csv_line(
            std::iter::once(format!("{name} std x 10^3"))
                .chain(cols.iter().map(|c| ((get(c).1 * 1e3).round() as i64).to_string())),
        );
        out += &csv_line(std::iter::once(format!("{name} delta")).chain(cols.iter().map(|c| {
            let (mean, _, full) = get(c);
            delta(mean - full)
        })));
    }
    out += &csv_line(std::iter::once("manifest_hash".to_string()).chain(cols.iter().map(|c| c.manifest_hash.clone())));
    out
}

pub fn bootstrap_json(cols: &[BootstrapColumn]) -> String {
    let mut s = serde_json::to_string_pretty(&json!({ "columns": cols })).expect("json serializes");
    s.push('\n');
    s
}

/// Raw replicate values, one line per (model, replicate).
pub fn replicates_csv(cols: &[(&str, &[crate::bootstrap::Replicate])]) -> String {
    let mut out = String::from("label,replicate,mcqa_plus,mv,bmca_full,ci,cora\n");
    for (label, reps) in cols {
        let label = csv_line([label.to_string()]);
        let label = label.trim_end();
        for (i, r) in reps.iter().enumerate() {
            let _ = writeln!(out, "{label},{i},{},{},{},{},{}", r.mcqa_plus, r.mv, r.bmca_full, r.ci, r.cora);
        }
    }
    out
}

/// Full-set and same-cardinality scores for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationColumn {
    pub label: String,
    pub manifest_hash: String,
    pub full: MetricReport,
    pub filtered: MetricReport,
}

type Pick = fn(&MetricReport) -> f64;
const ABLATION_METRICS: [(&str, Pick); 3] = [
    ("MCQA+", |r| r.mcqa_plus),
    ("MV", |r| r.mv),
    ("CoRA", |r| r.cora),
];

/// Filtered scores with ranks, then `filtered - full` differences.
pub fn ablation_markdown(cols: &[AblationColumn]) -> String {
    let labels: Vec<&str> = cols.iter().map(|c| c.label.as_str()).collect();
    let mut out = String::new();
    md_header(&mut out, &labels);
    md_section(&mut out, "Same-cardinality variants only", labels.len());
    let rows: Vec<Row> = ABLATION_METRICS
        .iter()
        .map(|(name, f)| Row {
            name: name.to_string(),
            values: cols.iter().map(|c| f(&c.filtered)).collect(),
            ranked: true,
        })
        .collect();
    md_rows(&mut out, &rows);
    md_section(&mut out, "Difference from full set", labels.len());
    for (name, f) in ABLATION_METRICS {
        let cells: Vec<String> = cols.iter().map(|c| delta(f(&c.filtered) - f(&c.full))).collect();
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    md_manifests(&mut out, cols.iter().map(|c| (c.label.as_str(), c.manifest_hash.as_str())));
    out
}

pub fn ablation_csv(cols: &[AblationColumn]) -> String {
    let mut out = csv_line(std::iter::once("metric".to_string()).chain(cols.iter().map(|c| c.label.clone())));
    for (name, f) in ABLATION_METRICS {
        out += &csv_line(std::iter::once(name.to_string()).chain(cols.iter().map(|c| round2(f(&c.filtered)))));
    }
    for (name, f) in ABLATION_METRICS {
        out += &csv_line(
            std::iter::once(format!("{name} delta")).chain(cols.iter().map(|c| delta(f(&c.filtered) - f(&c.full)))),
        );
    }
    out += &csv_line(std::iter::once("manifest_hash".to_string()).chain(cols.iter().map(|c| c.manifest_hash.clone())));
    out
}

pub fn ablation_json(cols: &[AblationColumn]) -> String {
    let columns: Vec<_> = cols
        .iter()
        .map(|c| {
            let deltas: serde_json::Map<_, _> = ABLATION_METRICS
                .iter()
                .map(|(name, f)| (name.to_string(), json!(f(&c.filtered) - f(&c.full))))
                .collect();
            json!({
                "label": c.label,
                "manifest_hash": c.manifest_hash,
                "full": c.full,
                "filtered": c.filtered,
                "delta": deltas,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({ "columns": columns })).expect("json serializes");
    s.push('\n');
    s
}

/// Parameters printed above a guessing table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessingParams {
    pub trials: u64,
    pub choices: u64,
    pub threshold: f64,
}

fn msgr_cell(x: f64) -> String {
    format!("{x:.4}")
}

pub fn guessing_markdown(rows: &[GuessingTableRow], params: &GuessingParams, manifest_hash: &str) -> String {
    let mut out = format!(
        "Guessing probabilities of p or more correct answers in M={} trials of k={} choices (threshold {}).\n\n",
        params.trials, params.choices, params.threshold
    );
    let with_ref = rows.iter().any(|r| r.reference_msgr.is_some());
    if with_ref {
        out += "| p | random (r=1/k) | MSGR(p) | reference | deviation |\n|---|---|---|---|---|\n";
    } else {
        out += "| p | random (r=1/k) | MSGR(p) |\n|---|---|---|\n";
    }
    for r in rows {
        let _ = write!(out, "| {} | {} | {} |", r.p, format_tail(r.random_tail), msgr_cell(r.msgr));
        if let (Some(reference), Some(dev)) = (r.reference_msgr, r.deviation()) {
            let _ = write!(out, " {reference} | {dev:+.4} |");
        } else if with_ref {
            out += " | |";
        }
        out.push('\n');
    }
    let _ = writeln!(out, "\nmanifest `{manifest_hash}`");
    out
}

pub fn guessing_csv(rows: &[GuessingTableRow], params: &GuessingParams) -> String {
    let mut out = String::from("p,random,msgr,reference,deviation,trials,choices,threshold\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.p,
            format_tail(r.random_tail),
            msgr_cell(r.msgr),
            r.reference_msgr.map(|v| v.to_string()).unwrap_or_default(),
            r.deviation().map(|d| format!("{d:+.4}")).unwrap_or_default(),
            params.trials,
            params.choices,
            params.threshold
        );
    }
    out
}

pub fn guessing_json(rows: &[GuessingTableRow], params: &GuessingParams, manifest_hash: &str) -> String {
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "p": r.p,
                "random_tail": r.random_tail,
                "random_printed": format_tail(r.random_tail),
                "msgr": r.msgr,
                "reference_msgr": r.reference_msgr,
                "deviation": r.deviation(),
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({
        "params": params,
        "manifest_hash": manifest_hash,
        "rows": rows,
    }))
    .expect("json serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{score, EvaluationMatrix, MetricOptions, DEFAULT_BMCA_SWEEP};

    #[test]
    fn ranks_share_ties_on_printed_values() {
        assert_eq!(competition_ranks(&[0.64, 0.58, 0.65, 0.52]), vec![2, 3, 1, 4]);
        assert_eq!(competition_ranks(&[0.41, 0.41, 0.34, 0.34]), vec![1, 1, 3, 3]);
        assert_eq!(competition_ranks(&[0.751, 0.749, 0.6]), vec![1, 1, 3]);
    }

    #[test]
    fn tail_formatting() {
        assert_eq!(format_tail(1.0), "1.000");
        assert_eq!(format_tail(0.8926258176), "0.893");
        assert_eq!(format_tail(0.000864), "0.0009");
        assert_eq!(format_tail(1.024e-7), "0.0000001");
        assert_eq!(round2(-0.001), "0.00");
    }

    #[test]
    fn perfect_matrix_prints_all_ones() {
        let m = EvaluationMatrix::from_rows(vec![vec![true; 5]; 3]).unwrap();
        let report = score(&m, &DEFAULT_BMCA_SWEEP, &MetricOptions::default()).unwrap();
        let cols = vec![ReportColumn { label: "perfect".into(), manifest_hash: "h".into(), report }];
        let md = score_markdown(&cols);
        assert!(md.contains("| MCQA | 1.00 (1) |"));
        assert!(md.contains("| CI | 1.00 |"));
        let csv = score_csv(&cols);
        for line in csv.lines().skip(1).take(11) {
            assert!(line.ends_with(",1.00"), "{line}");
        }
    }
}
