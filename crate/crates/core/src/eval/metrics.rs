//! Accuracy/runtime aggregation.
//!
//! Per-type accuracy is `100 · matches / n`; overall accuracy is the
//! unweighted mean across types (even when counts differ). Runtimes are
//! averaged per type in minutes, with the overall runtime the unweighted
//! mean of per-type means.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::dataset::CANONICAL_TYPES;
use super::EvalError;
use crate::parsing::Verdict;

/// One scored record, the aggregation input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub record_id: String,
    pub question_type: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub unparseable: bool,
}

/// Per-type and overall accuracy/runtime matrices for one configuration,
/// mirroring one row of the benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub per_type_accuracy: BTreeMap<String, f64>,
    pub overall_accuracy: f64,
    /// Minutes. Empty when no runtimes were recorded.
    pub per_type_runtime: BTreeMap<String, f64>,
    /// Unweighted mean of the per-type runtime means.
    pub overall_runtime: f64,
    /// Direct mean over records. Differs from `overall_runtime` when type
    /// counts differ; both are reported since either averaging basis is
    /// defensible.
    #[serde(default)]
    pub record_mean_runtime: f64,
    pub counts: BTreeMap<String, usize>,
    pub unparseable: BTreeMap<String, usize>,
}

impl RunReport {
    /// Builds a report straight from per-type accuracy cells, recomputing
    /// the overall as their unweighted mean.
    pub fn from_accuracy_cells(
        label: impl Into<String>,
        cells: &[(&str, f64)],
    ) -> Self {
        let per_type_accuracy: BTreeMap<String, f64> = cells
            .iter()
            .map(|(t, v)| (t.to_string(), *v))
            .collect();
        let overall_accuracy = mean(per_type_accuracy.values().copied());
        Self {
            label: label.into(),
            per_type_accuracy,
            overall_accuracy,
            per_type_runtime: BTreeMap::new(),
            overall_runtime: 0.0,
            record_mean_runtime: 0.0,
            counts: BTreeMap::new(),
            unparseable: BTreeMap::new(),
        }
    }

    pub fn with_runtime_cells(mut self, cells: &[(&str, f64)]) -> Self {
        self.per_type_runtime = cells.iter().map(|(t, v)| (t.to_string(), *v)).collect();
        self.overall_runtime = mean(self.per_type_runtime.values().copied());
        self.record_mean_runtime = self.overall_runtime;
        self
    }

    /// Report column order: the canonical types that are present, in table
    /// order, then any extra types sorted, then `overall` (appended by the
    /// renderers).
    pub fn column_order(&self) -> Vec<String> {
        column_order_for(self.per_type_accuracy.keys().map(String::as_str))
    }
}

pub(super) fn column_order_for<'a>(present: impl Iterator<Item = &'a str>) -> Vec<String> {
    let present: Vec<&str> = present.collect();
    let mut order: Vec<String> = CANONICAL_TYPES
        .iter()
        .filter(|t| present.contains(t))
        .map(|t| t.to_string())
        .collect();
    let mut extras: Vec<String> = present
        .iter()
        .filter(|t| !CANONICAL_TYPES.contains(*t))
        .map(|t| t.to_string())
        .collect();
    extras.sort();
    extras.dedup();
    order.extend(extras);
    order
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Aggregates scored records (plus per-record runtimes in minutes, keyed by
/// record id) into a report.
pub fn aggregate(
    items: &[ScoredItem],
    runtimes_min: &HashMap<String, f64>,
    label: &str,
) -> Result<RunReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut matches: BTreeMap<String, usize> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut unparseable: BTreeMap<String, usize> = BTreeMap::new();
    let mut runtime_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut record_runtime_sum = 0.0;
    let mut record_runtime_n = 0usize;
    for item in items {
        let t = item.question_type.clone();
        *counts.entry(t.clone()).or_default() += 1;
        if item.verdict == Verdict::Match {
            *matches.entry(t.clone()).or_default() += 1;
        }
        if item.unparseable {
            *unparseable.entry(t.clone()).or_default() += 1;
        }
        if let Some(runtime) = runtimes_min.get(&item.record_id) {
            let slot = runtime_sums.entry(t).or_insert((0.0, 0));
            slot.0 += runtime;
            slot.1 += 1;
            record_runtime_sum += runtime;
            record_runtime_n += 1;
        }
    }
    let per_type_accuracy: BTreeMap<String, f64> = counts
        .iter()
        .map(|(t, n)| {
            let m = matches.get(t).copied().unwrap_or(0);
            (t.clone(), 100.0 * m as f64 / *n as f64)
        })
        .collect();
    let per_type_runtime: BTreeMap<String, f64> = runtime_sums
        .into_iter()
        .map(|(t, (sum, n))| (t, sum / n as f64))
        .collect();
    let unparseable: BTreeMap<String, usize> = counts
        .keys()
        .map(|t| (t.clone(), unparseable.get(t).copied().unwrap_or(0)))
        .collect();
    Ok(RunReport {
        label: label.to_string(),
        overall_accuracy: mean(per_type_accuracy.values().copied()),
        overall_runtime: mean(per_type_runtime.values().copied()),
        record_mean_runtime: if record_runtime_n == 0 {
            0.0
        } else {
            record_runtime_sum / record_runtime_n as f64
        },
        per_type_accuracy,
        per_type_runtime,
        counts,
        unparseable,
    })
}

/// Cell-wise unweighted mean across reports; the overall cells are
/// recomputed from the averaged per-type cells.
pub fn baseline_average(reports: &[RunReport]) -> Result<RunReport, EvalError> {
    let first = reports.first().ok_or(EvalError::EmptyInput)?;
    let type_set: Vec<&String> = first.per_type_accuracy.keys().collect();
    for r in reports {
        if r.per_type_accuracy.keys().collect::<Vec<_>>() != type_set {
            return Err(EvalError::TypeSetMismatch);
        }
    }
    let n = reports.len() as f64;
    let per_type_accuracy: BTreeMap<String, f64> = type_set
        .iter()
        .map(|t| {
            let sum: f64 = reports.iter().map(|r| r.per_type_accuracy[*t]).sum();
            ((*t).clone(), sum / n)
        })
        .collect();
    let all_have_runtime = reports
        .iter()
        .all(|r| r.per_type_runtime.keys().collect::<Vec<_>>() == type_set);
    let per_type_runtime: BTreeMap<String, f64> = if all_have_runtime {
        type_set
            .iter()
            .map(|t| {
                let sum: f64 = reports.iter().map(|r| r.per_type_runtime[*t]).sum();
                ((*t).clone(), sum / n)
            })
            .collect()
    } else {
        BTreeMap::new()
    };
    let counts: BTreeMap<String, usize> = type_set
        .iter()
        .map(|t| {
            let total: usize = reports.iter().map(|r| r.counts.get(*t).copied().unwrap_or(0)).sum();
            ((*t).clone(), total)
        })
        .collect();
    Ok(RunReport {
        label: format!("average of {}", reports.len()),
        overall_accuracy: mean(per_type_accuracy.values().copied()),
        overall_runtime: mean(per_type_runtime.values().copied()),
        record_mean_runtime: mean(reports.iter().map(|r| r.record_mean_runtime)),
        per_type_accuracy,
        per_type_runtime,
        counts,
        unparseable: BTreeMap::new(),
    })
}

/// Cell-wise accuracy delta `b − a`, including the `overall` cell.
pub fn improvement(
    a: &RunReport,
    b: &RunReport,
) -> Result<BTreeMap<String, f64>, EvalError> {
    if a.per_type_accuracy.keys().collect::<Vec<_>>()
        != b.per_type_accuracy.keys().collect::<Vec<_>>()
    {
        return Err(EvalError::TypeSetMismatch);
    }
    let mut deltas: BTreeMap<String, f64> = a
        .per_type_accuracy
        .keys()
        .map(|t| (t.clone(), b.per_type_accuracy[t] - a.per_type_accuracy[t]))
        .collect();
    deltas.insert("overall".into(), b.overall_accuracy - a.overall_accuracy);
    Ok(deltas)
}
