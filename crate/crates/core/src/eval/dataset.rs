//! Dataset ingestion and seeded per-type sampling.
//!
//! The dataset file is line-delimited JSON of our own definition:
//! `{image_path, question, ground_truth, type}` plus an optional `id`
//! (records without one get a stable line-number id). Relative image paths
//! resolve against the dataset file's directory. Converting an external
//! benchmark's native annotations into this layout is a one-line-per-record
//! adapter the harness deliberately does not depend on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::task::{ImageRef, VqaTask};

/// The benchmark's ten question types, in report column order.
pub const CANONICAL_TYPES: [&str; 10] = [
    "obj_quantity",
    "obj_position",
    "obj_direction",
    "obj_size",
    "reasoning",
    "obj_color",
    "obj_existence",
    "obj_category",
    "obj_shape",
    "scene_type",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub record_id: String,
    pub image: ImageRef,
    pub question: String,
    pub ground_truth: String,
    pub question_type: String,
}

impl EvalRecord {
    pub fn to_task(&self) -> VqaTask {
        VqaTask::new(self.record_id.clone(), self.image.clone(), self.question.clone())
            .expect("record questions are validated non-empty")
            .with_question_type(self.question_type.clone())
            .with_ground_truth(self.ground_truth.clone())
    }
}

#[derive(Debug, Deserialize)]
struct DatasetLine {
    image_path: String,
    question: String,
    ground_truth: String,
    #[serde(rename = "type")]
    question_type: String,
    #[serde(default)]
    id: Option<String>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema_err = |message: String| EvalError::Schema {
            path: path.to_path_buf(),
            line_no,
            message,
        };
        let parsed: DatasetLine =
            serde_json::from_str(line).map_err(|e| schema_err(e.to_string()))?;
        for (field, value) in [
            ("question", &parsed.question),
            ("ground_truth", &parsed.ground_truth),
            ("type", &parsed.question_type),
        ] {
            if value.trim().is_empty() {
                return Err(schema_err(format!("field {field} must be non-empty")));
            }
        }
        if !CANONICAL_TYPES.contains(&parsed.question_type.as_str()) {
            tracing::warn!(
                line_no,
                question_type = %parsed.question_type,
                "unknown question type; accepting"
            );
        }
        let image_path = {
            let p = PathBuf::from(&parsed.image_path);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let image_err = || EvalError::ImageRef {
            path: path.to_path_buf(),
            line_no,
            image: image_path.clone(),
        };
        if !image_path.is_file() {
            return Err(image_err());
        }
        let image = ImageRef::from_path(&image_path).map_err(|_| image_err())?;
        records.push(EvalRecord {
            record_id: parsed.id.unwrap_or_else(|| format!("rec{line_no:05}")),
            image,
            question: parsed.question,
            ground_truth: parsed.ground_truth,
            question_type: parsed.question_type,
        });
    }
    Ok(records)
}

/// Seeded uniform sampling without replacement, per question type. Types
/// with fewer than `n` records contribute all of them (with a warning).
/// Output is ordered by (type, record_id) and is a pure function of
/// (records, n, seed).
pub fn sample_per_type(records: &[EvalRecord], n: usize, seed: u64) -> Vec<EvalRecord> {
    let mut by_type: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_type.entry(&r.question_type).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<EvalRecord> = Vec::new();
    for (question_type, mut group) in by_type {
        group.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        if group.len() <= n {
            if group.len() < n {
                tracing::warn!(
                    question_type,
                    available = group.len(),
                    requested = n,
                    "type is short; taking all records"
                );
            }
            out.extend(group.into_iter().cloned());
        } else {
            let chosen = rand::seq::index::sample(&mut rng, group.len(), n);
            out.extend(chosen.iter().map(|i| group[i].clone()));
        }
    }
    out.sort_by(|a, b| {
        (a.question_type.as_str(), a.record_id.as_str())
            .cmp(&(b.question_type.as_str(), b.record_id.as_str()))
    });
    out
}
