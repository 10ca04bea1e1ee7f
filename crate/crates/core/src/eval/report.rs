//! Report rendering: aligned text table, CSV, and a structured (JSON)
//! form that round-trips to an equal [`RunReport`].
//!
//! Columns follow the benchmark table order (`obj_quantity` …
//! `scene_type`, unknown extras appended, `overall` last); the human
//! formats render values with 2 decimals, the structured form keeps full
//! precision.

use serde::{Deserialize, Serialize};

use super::metrics::RunReport;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TableText,
    Csv,
    Structured,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::TableText => "txt",
            ReportFormat::Csv => "csv",
            ReportFormat::Structured => "json",
        }
    }
}

pub fn render_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::TableText => render_table(report),
        ReportFormat::Structured => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
    }
}

pub fn parse_structured_report(text: &str) -> Result<RunReport, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::BadReport(e.to_string()))
}

fn cell(v: f64) -> String {
    format!("{v:.2}")
}

fn render_csv(report: &RunReport) -> String {
    let order = report.column_order();
    let mut out = String::new();
    out.push_str("metric,model");
    for t in &order {
        out.push(',');
        out.push_str(t);
    }
    out.push_str(",overall\n");

    out.push_str(&format!("accuracy_pct,{}", report.label));
    for t in &order {
        out.push(',');
        out.push_str(&cell(report.per_type_accuracy[t]));
    }
    out.push(',');
    out.push_str(&cell(report.overall_accuracy));
    out.push('\n');

    if !report.per_type_runtime.is_empty() {
        out.push_str(&format!("runtime_min,{}", report.label));
        for t in &order {
            out.push(',');
            out.push_str(&cell(report.per_type_runtime.get(t).copied().unwrap_or(0.0)));
        }
        out.push(',');
        out.push_str(&cell(report.overall_runtime));
        out.push('\n');
    }
    out
}

fn render_table(report: &RunReport) -> String {
    let order = report.column_order();
    let mut header: Vec<String> = vec!["model".into()];
    header.extend(order.iter().cloned());
    header.push("overall".into());

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut acc_row = vec![format!("{} accuracy%", report.label)];
    acc_row.extend(order.iter().map(|t| cell(report.per_type_accuracy[t])));
    acc_row.push(cell(report.overall_accuracy));
    rows.push(acc_row);
    if !report.per_type_runtime.is_empty() {
        let mut rt_row = vec![format!("{} runtime(min)", report.label)];
        rt_row.extend(
            order
                .iter()
                .map(|t| cell(report.per_type_runtime.get(t).copied().unwrap_or(0.0))),
        );
        rt_row.push(cell(report.overall_runtime));
        rows.push(rt_row);
    }
    if !report.counts.is_empty() {
        let mut n_row = vec![format!("{} n", report.label)];
        n_row.extend(
            order
                .iter()
                .map(|t| report.counts.get(t).copied().unwrap_or(0).to_string()),
        );
        n_row.push(report.counts.values().sum::<usize>().to_string());
        rows.push(n_row);
    }

    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &rows {
        for (i, v) in row.iter().enumerate() {
            widths[i] = widths[i].max(v.len());
        }
    }
    let fmt_row = |row: &[String]| {
        row.iter()
            .enumerate()
            .map(|(i, v)| format!("{v:>width$}", width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = fmt_row(&header);
    out.push('\n');
    for row in &rows {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}
