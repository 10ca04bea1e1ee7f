//! Evaluation harness: dataset ingestion, per-type sampling, LLM-judge
//! scoring, accuracy/runtime aggregation and report emission.

mod dataset;
mod metrics;
mod report;
mod runner;

pub use dataset::{load_dataset, sample_per_type, EvalRecord, CANONICAL_TYPES};
pub use metrics::{aggregate, baseline_average, improvement, RunReport, ScoredItem};
pub use report::{parse_structured_report, render_report, ReportFormat};
pub use runner::{
    read_runtimes, read_verdicts, report_from_files, run_eval, EvalOptions, EvalOutcome,
    RunnerError, RuntimeRow,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendConfig, ChatMessage, Gateway};
use crate::parsing::{parse_judge_verdict, Verdict};
use crate::prompts::{Bindings, PromptRegistry, TemplateId};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset {path} line {line_no}: {message}")]
    Schema {
        path: PathBuf,
        line_no: usize,
        message: String,
    },
    #[error("dataset {path} line {line_no}: image {image} is not readable")]
    ImageRef {
        path: PathBuf,
        line_no: usize,
        image: PathBuf,
    },
    #[error("no scored records to aggregate")]
    EmptyInput,
    #[error("reports cover different question-type sets")]
    TypeSetMismatch,
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad report payload: {0}")]
    BadReport(String),
}

/// The judge's decision on one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub record_id: String,
    pub question_type: String,
    pub prediction: String,
    pub verdict: Verdict,
    /// The judge reply had no parseable 0/1 token (or the judge call
    /// failed); scored as no-match but tallied separately.
    pub unparseable: bool,
    pub judge_latency_s: f64,
}

/// LLM-as-judge scoring of free-form predictions against ground truth.
pub struct Judge<'a> {
    gateway: &'a Gateway,
    registry: &'a PromptRegistry,
    cfg: BackendConfig,
}

impl<'a> Judge<'a> {
    pub fn new(gateway: &'a Gateway, registry: &'a PromptRegistry, cfg: BackendConfig) -> Self {
        Self {
            gateway,
            registry,
            cfg,
        }
    }

    /// Scores one prediction. Empty predictions score no-match without a
    /// backend call; judge failures and unparseable replies score no-match
    /// with the `unparseable` tally set.
    pub fn judge(&self, record: &EvalRecord, prediction: &str) -> MatchVerdict {
        if prediction.trim().is_empty() {
            return MatchVerdict {
                record_id: record.record_id.clone(),
                question_type: record.question_type.clone(),
                prediction: prediction.to_string(),
                verdict: Verdict::NoMatch,
                unparseable: false,
                judge_latency_s: 0.0,
            };
        }
        let bindings = Bindings::new()
            .question(record.question.clone())
            .ground_truth(record.ground_truth.clone())
            .prediction(prediction);
        let (verdict, unparseable, latency) = match self
            .registry
            .render(TemplateId::JudgeUser, &bindings)
            .map_err(|e| e.to_string())
            .and_then(|pair| {
                self.gateway
                    .chat(&self.cfg, &[ChatMessage::user(pair.user_text)])
                    .map_err(|e| e.to_string())
            }) {
            Ok(reply) => match parse_judge_verdict(&reply.text) {
                Ok(v) => (v, false, reply.latency_s),
                Err(_) => {
                    tracing::warn!(record_id = %record.record_id, reply = %reply.text, "unparseable judge verdict");
                    (Verdict::NoMatch, true, reply.latency_s)
                }
            },
            Err(message) => {
                tracing::warn!(record_id = %record.record_id, %message, "judge call failed");
                (Verdict::NoMatch, true, 0.0)
            }
        };
        MatchVerdict {
            record_id: record.record_id.clone(),
            question_type: record.question_type.clone(),
            prediction: prediction.to_string(),
            verdict,
            unparseable,
            judge_latency_s: latency,
        }
    }
}
