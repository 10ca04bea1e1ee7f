//! The resumable evaluation loop.
//!
//! Records are evaluated by a small worker pool (bounded by the configured
//! concurrency), each run producing an audit file, a runtime row and a
//! verdict row. Rows are appended line-by-line and flushed immediately so
//! a killed run loses at most one partial line; resume truncates any
//! partial tail, skips already-scored records, and converges on the same
//! verdict set as an uninterrupted run.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::EvalRecord;
use super::metrics::{aggregate, RunReport, ScoredItem};
use super::report::{render_report, ReportFormat};
use super::{EvalError, Judge, MatchVerdict};
use crate::audit::write_audit;
use crate::orchestrator::{Pipeline, PipelineError};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("eval io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("output dir already contains verdicts; pass --resume or choose a fresh --out")]
    WouldClobber,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub types_filter: Option<Vec<String>>,
    pub limit: Option<usize>,
    pub resume: bool,
    pub concurrency: usize,
    pub label: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            types_filter: None,
            limit: None,
            resume: false,
            concurrency: 2,
            label: "run".into(),
        }
    }
}

/// Wall-clock seconds one record's pipeline took (judge time excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub record_id: String,
    pub runtime_s: f64,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: RunReport,
    pub evaluated: usize,
    pub skipped: usize,
    pub verdicts_path: PathBuf,
    pub runtimes_path: PathBuf,
    pub report_paths: Vec<PathBuf>,
}

pub fn run_eval(
    pipeline: &Pipeline,
    judge: &Judge<'_>,
    records: &[EvalRecord],
    out_dir: &Path,
    opts: &EvalOptions,
) -> Result<EvalOutcome, RunnerError> {
    std::fs::create_dir_all(out_dir)?;
    let audits_dir = out_dir.join("audits");
    std::fs::create_dir_all(&audits_dir)?;
    let verdicts_path = out_dir.join("verdicts.jsonl");
    let runtimes_path = out_dir.join("runtimes.jsonl");

    if verdicts_path.exists() && !opts.resume {
        return Err(RunnerError::WouldClobber);
    }

    // Recover complete rows from any previous run; a partial trailing line
    // (from a kill mid-write) is truncated away before appending.
    let done: HashSet<String> = if opts.resume {
        let prior: Vec<MatchVerdict> = read_jsonl_repairing(&verdicts_path)?;
        read_jsonl_repairing::<RuntimeRow>(&runtimes_path)?;
        prior.into_iter().map(|v| v.record_id).collect()
    } else {
        HashSet::new()
    };

    let selected: Vec<&EvalRecord> = {
        let mut selected: Vec<&EvalRecord> = records
            .iter()
            .filter(|r| match &opts.types_filter {
                Some(types) => types.contains(&r.question_type),
                None => true,
            })
            .collect();
        if let Some(limit) = opts.limit {
            selected.truncate(limit);
        }
        selected
    };
    let pending: VecDeque<&EvalRecord> = selected
        .iter()
        .copied()
        .filter(|r| !done.contains(&r.record_id))
        .collect();
    let skipped = selected.len() - pending.len();
    let evaluated = pending.len();

    let verdict_file = open_append(&verdicts_path)?;
    let runtime_file = open_append(&runtimes_path)?;
    let sink = Mutex::new((verdict_file, runtime_file));
    let queue = Mutex::new(pending);
    let abort: Mutex<Option<RunnerError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..opts.concurrency.max(1) {
            scope.spawn(|| loop {
                if abort.lock().unwrap().is_some() {
                    return;
                }
                let record = match queue.lock().unwrap().pop_front() {
                    Some(r) => r,
                    None => return,
                };
                if let Err(e) = evaluate_one(pipeline, judge, record, &audits_dir, &sink) {
                    let mut slot = abort.lock().unwrap();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    return;
                }
            });
        }
    });
    if let Some(err) = abort.into_inner().unwrap() {
        return Err(err);
    }

    // Aggregate from the files, so resumed and fresh runs flow through the
    // identical path.
    let verdicts = read_verdicts(&verdicts_path)?;
    let runtimes = read_runtimes(&runtimes_path)?;
    let report = build_report(&verdicts, &runtimes, &opts.label)?;

    let mut report_paths = Vec::new();
    for format in [ReportFormat::TableText, ReportFormat::Csv, ReportFormat::Structured] {
        let path = out_dir.join(format!("report.{}", format.extension()));
        std::fs::write(&path, render_report(&report, format))?;
        report_paths.push(path);
    }
    Ok(EvalOutcome {
        report,
        evaluated,
        skipped,
        verdicts_path,
        runtimes_path,
        report_paths,
    })
}

fn evaluate_one(
    pipeline: &Pipeline,
    judge: &Judge<'_>,
    record: &EvalRecord,
    audits_dir: &Path,
    sink: &Mutex<(File, File)>,
) -> Result<(), RunnerError> {
    let result = pipeline.run_task(record.to_task())?;
    let audit_path = audits_dir.join(format!("{}.jsonl", record.record_id));
    let audit_file = File::create(&audit_path).map_err(RunnerError::Io)?;
    write_audit(&result.memory, &result.final_answer, audit_file)
        .map_err(|e| RunnerError::Io(std::io::Error::other(e)))?;

    let runtime = RuntimeRow {
        record_id: record.record_id.clone(),
        runtime_s: result.memory.total_latency_s(),
    };
    // Runtime first: a verdict row implies its runtime row exists, so a
    // kill between the two only re-runs the record on resume.
    append_row(&mut sink.lock().unwrap().1, &runtime)?;
    let verdict = judge.judge(record, &result.final_answer);
    append_row(&mut sink.lock().unwrap().0, &verdict)?;
    Ok(())
}

fn build_report(
    verdicts: &[MatchVerdict],
    runtimes: &[RuntimeRow],
    label: &str,
) -> Result<RunReport, EvalError> {
    // Last row wins; a re-evaluated record replaces its orphaned runtime.
    let mut runtime_min: HashMap<String, f64> = HashMap::new();
    for row in runtimes {
        runtime_min.insert(row.record_id.clone(), row.runtime_s / 60.0);
    }
    let mut by_id: HashMap<String, &MatchVerdict> = HashMap::new();
    for v in verdicts {
        by_id.insert(v.record_id.clone(), v);
    }
    let mut items: Vec<ScoredItem> = by_id
        .values()
        .map(|v| ScoredItem {
            record_id: v.record_id.clone(),
            question_type: v.question_type.clone(),
            verdict: v.verdict,
            unparseable: v.unparseable,
        })
        .collect();
    items.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    aggregate(&items, &runtime_min, label)
}

/// Builds a report from persisted verdict/runtime files (the `report`
/// command path; strict parsing).
pub fn report_from_files(
    verdicts_path: &Path,
    runtimes_path: &Path,
    label: &str,
) -> Result<RunReport, EvalError> {
    let verdicts = read_verdicts(verdicts_path)?;
    let runtimes = read_runtimes(runtimes_path)?;
    build_report(&verdicts, &runtimes, label)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<MatchVerdict>, EvalError> {
    read_jsonl_strict(path)
}

pub fn read_runtimes(path: &Path) -> Result<Vec<RuntimeRow>, EvalError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl_strict(path)
}

fn open_append(path: &Path) -> Result<File, std::io::Error> {
    OpenOptions::new().create(true).append(true).open(path)
}

fn append_row<T: Serialize>(file: &mut File, row: &T) -> Result<(), RunnerError> {
    let line = serde_json::to_string(row).map_err(std::io::Error::other)?;
    file.write_all(line.as_bytes())?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

fn read_jsonl_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| EvalError::Schema {
            path: path.to_path_buf(),
            line_no: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Reads complete rows and truncates the file after the last valid one, so
/// appends continue from a clean line boundary.
fn read_jsonl_repairing<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, std::io::Error> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = std::fs::read(path)?;
    let mut rows = Vec::new();
    let mut valid_len = 0usize;
    let mut start = 0usize;
    while start < bytes.len() {
        let Some(rel_end) = bytes[start..].iter().position(|&b| b == b'\n') else {
            break; // trailing partial line without newline
        };
        let line = &bytes[start..start + rel_end];
        match serde_json::from_slice::<T>(line) {
            Ok(row) => {
                rows.push(row);
                start += rel_end + 1;
                valid_len = start;
            }
            Err(_) => break,
        }
    }
    if valid_len < bytes.len() {
        tracing::warn!(path = %path.display(), kept = valid_len, total = bytes.len(), "truncating partial tail");
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(valid_len as u64)?;
    }
    Ok(rows)
}
