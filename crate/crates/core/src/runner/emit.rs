use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::json;

use super::report::BUILTIN_METRICS;
use super::{MetricReport, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Markdown-style table with the best value per column in bold.
    TableText,
    /// CSV.
    Delimited,
    /// JSON.
    Structured,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" | "table_text" => Ok(Self::TableText),
            "csv" | "delimited" => Ok(Self::Delimited),
            "json" | "structured" => Ok(Self::Structured),
            other => Err(format!("unknown report format `{other}` (expected table, csv or json)")),
        }
    }
}

/// Metric columns present in any report: built-ins first in fixed order,
/// then per-label distribution shares, then external scorers by name.
pub fn metric_columns(reports: &[MetricReport]) -> Vec<String> {
    let mut columns: Vec<String> = BUILTIN_METRICS
        .iter()
        .filter(|m| reports.iter().any(|r| r.aggregates.contains_key(**m)))
        .map(|m| m.to_string())
        .collect();
    for r in reports {
        for row in r.distribution.iter().flat_map(|d| &d.rows) {
            let col = share_column(&row.label);
            if !columns.contains(&col) {
                columns.push(col);
            }
        }
    }
    let mut extra: Vec<String> = reports
        .iter()
        .flat_map(|r| r.aggregates.keys())
        .filter(|k| !BUILTIN_METRICS.contains(&k.as_str()))
        .cloned()
        .collect();
    extra.sort();
    extra.dedup();
    columns.extend(extra);
    columns
}

fn share_column(label: &str) -> String {
    format!("{label}%")
}

fn value(report: &MetricReport, column: &str) -> Option<f64> {
    if let Some(v) = report.aggregates.get(column) {
        return Some(*v);
    }
    let label = column.strip_suffix('%')?;
    report.distribution.as_ref()?.percent(label)
}

/// Renders reports of one mode as a table with one row per report.
pub fn emit_report(reports: &[MetricReport], format: ReportFormat) -> Result<String, RunError> {
    let first = reports.first().ok_or_else(|| RunError::Report("no reports to render".into()))?;
    if let Some(other) = reports.iter().find(|r| r.mode != first.mode) {
        return Err(RunError::MixedModes(format!(
            "`{}` is {}, `{}` is {}",
            first.label,
            first.mode.as_str(),
            other.label,
            other.mode.as_str()
        )));
    }
    let columns = metric_columns(reports);
    Ok(match format {
        ReportFormat::TableText => table_text(reports, &columns),
        ReportFormat::Delimited => delimited(reports, &columns),
        ReportFormat::Structured => structured(reports, &columns),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

fn table_text(reports: &[MetricReport], columns: &[String]) -> String {
    // distribution shares are descriptive, so only scores get a best marker
    let best: Vec<Option<String>> = columns
        .iter()
        .map(|c| {
            if c.ends_with('%') {
                return None;
            }
            reports
                .iter()
                .filter_map(|r| value(r, c))
                .max_by(f64::total_cmp)
                .map(|v| format!("{v:.2}"))
        })
        .collect();

    let mut out = String::new();
    let _ = write!(out, "| model |");
    for c in columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    for _ in columns {
        out.push_str("---:|");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "| {} |", r.label);
        for (c, best) in columns.iter().zip(&best) {
            let text = cell(value(r, c));
            if best.as_deref() == Some(text.as_str()) {
                let _ = write!(out, " **{text}** |");
            } else {
                let _ = write!(out, " {text} |");
            }
        }
        out.push('\n');
    }
    out
}

fn delimited(reports: &[MetricReport], columns: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for r in reports {
        let mut row = vec![r.label.clone()];
        row.extend(columns.iter().map(|c| value(r, c).map(|v| format!("{v:.2}")).unwrap_or_default()));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn structured(reports: &[MetricReport], columns: &[String]) -> String {
    let rows: Vec<_> = reports
        .iter()
        .map(|r| {
            let values: serde_json::Map<String, serde_json::Value> = columns
                .iter()
                .filter_map(|c| value(r, c).map(|v| (c.clone(), json!((v * 100.0).round() / 100.0))))
                .collect();
            json!({"model": r.label, "fingerprint": r.fingerprint, "n": r.n, "values": values})
        })
        .collect();
    let doc = json!({"mode": reports[0].mode.as_str(), "columns": columns, "rows": rows});
    let mut s = serde_json::to_string_pretty(&doc).expect("json");
    s.push('\n');
    s
}
