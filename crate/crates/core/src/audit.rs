//! Line-delimited audit trail: one JSON object per turn, then one summary.
//!
//! Turn lines carry exactly: `task_id`, `seq`, `role`, `backend_id`,
//! `iteration`, `started_at`, `ended_at`, `prompt_rendered`, `response_raw`.
//! The final line is `{task_id, final_answer, total_latency_s}`. Reading a
//! written trail back yields an equal [`AuditTrail`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{format_audit_timestamp, parse_audit_timestamp};
use crate::memory::{AgentTurn, ConversationMemory, Role};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("memory is empty; nothing to audit")]
    EmptyMemory,
    #[error("audit io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("audit line {line_no} malformed: {message}")]
    Malformed { line_no: usize, message: String },
    #[error("audit trail is missing its summary line")]
    MissingSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditTurnRecord {
    pub task_id: String,
    pub seq: u64,
    pub role: Role,
    pub backend_id: String,
    pub iteration: u32,
    pub started_at: String,
    pub ended_at: String,
    pub prompt_rendered: String,
    pub response_raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub task_id: String,
    pub final_answer: String,
    pub total_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditTrail {
    pub task_id: String,
    pub turns: Vec<AuditTurnRecord>,
    pub final_answer: String,
    pub total_latency_s: f64,
}

impl AuditTrail {
    pub fn from_memory(memory: &ConversationMemory, final_answer: &str) -> Result<Self, AuditError> {
        if memory.is_empty() {
            return Err(AuditError::EmptyMemory);
        }
        let task_id = memory.task().task_id.clone();
        let turns = memory
            .turns()
            .iter()
            .enumerate()
            .map(|(seq, t)| turn_record(&task_id, seq as u64, t))
            .collect();
        Ok(Self {
            task_id,
            turns,
            final_answer: final_answer.to_string(),
            total_latency_s: memory.total_latency_s(),
        })
    }
}

fn turn_record(task_id: &str, seq: u64, turn: &AgentTurn) -> AuditTurnRecord {
    AuditTurnRecord {
        task_id: task_id.to_string(),
        seq,
        role: turn.role,
        backend_id: turn.backend_id.clone(),
        iteration: turn.iteration,
        started_at: format_audit_timestamp(turn.started_at),
        ended_at: format_audit_timestamp(turn.ended_at),
        prompt_rendered: turn.prompt_rendered.clone(),
        response_raw: turn.response_raw.clone(),
    }
}

/// Serializes the memory to `sink`, one record per turn plus the summary
/// line, and returns the trail that was written.
pub fn write_audit(
    memory: &ConversationMemory,
    final_answer: &str,
    mut sink: impl Write,
) -> Result<AuditTrail, AuditError> {
    let trail = AuditTrail::from_memory(memory, final_answer)?;
    for turn in &trail.turns {
        serde_json::to_writer(&mut sink, turn).map_err(std::io::Error::other)?;
        sink.write_all(b"\n")?;
    }
    let summary = AuditSummary {
        task_id: trail.task_id.clone(),
        final_answer: trail.final_answer.clone(),
        total_latency_s: trail.total_latency_s,
    };
    serde_json::to_writer(&mut sink, &summary).map_err(std::io::Error::other)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(trail)
}

/// Parses a trail previously produced by [`write_audit`].
pub fn read_audit(reader: impl BufRead) -> Result<AuditTrail, AuditError> {
    let mut turns: Vec<AuditTurnRecord> = Vec::new();
    let mut summary: Option<AuditSummary> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(AuditError::Malformed {
                line_no: idx + 1,
                message: "records after the summary line".into(),
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| AuditError::Malformed {
                line_no: idx + 1,
                message: e.to_string(),
            })?;
        if value.get("final_answer").is_some() {
            summary = Some(serde_json::from_value(value).map_err(|e| AuditError::Malformed {
                line_no: idx + 1,
                message: e.to_string(),
            })?);
        } else {
            let turn: AuditTurnRecord =
                serde_json::from_value(value).map_err(|e| AuditError::Malformed {
                    line_no: idx + 1,
                    message: e.to_string(),
                })?;
            for (label, ts) in [("started_at", &turn.started_at), ("ended_at", &turn.ended_at)] {
                if parse_audit_timestamp(ts).is_none() {
                    return Err(AuditError::Malformed {
                        line_no: idx + 1,
                        message: format!("bad {label} timestamp {ts:?}"),
                    });
                }
            }
            turns.push(turn);
        }
    }
    let summary = summary.ok_or(AuditError::MissingSummary)?;
    Ok(AuditTrail {
        task_id: summary.task_id,
        turns,
        final_answer: summary.final_answer,
        total_latency_s: summary.total_latency_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, StepClock};
    use crate::task::{ImageRef, MediaType, VqaTask};

    fn memory_with(n: usize) -> ConversationMemory {
        let task = VqaTask::new(
            "task-7",
            ImageRef::from_bytes(vec![1], MediaType::Png),
            "Q?",
        )
        .unwrap();
        let clock = StepClock::starting_at_default(25);
        let mut mem = ConversationMemory::new(task);
        for i in 0..n {
            let start = clock.now();
            let end = clock.now();
            mem.append_turn(
                AgentTurn::new(
                    Role::VisionSuite,
                    format!("backend-{i}"),
                    format!("prompt {i}"),
                    format!("reply {i}\nwith newline"),
                    start,
                    end,
                    1,
                )
                .unwrap(),
            );
        }
        mem
    }

    #[test]
    fn one_record_per_turn_plus_summary() {
        let mem = memory_with(15);
        let mut buf = Vec::new();
        write_audit(&mem, "final", &mut buf).unwrap();
        let lines: Vec<_> = buf.split(|&b| b == b'\n').filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 16);
    }

    #[test]
    fn round_trip_is_identity() {
        let mem = memory_with(4);
        let mut buf = Vec::new();
        let written = write_audit(&mem, "two runways", &mut buf).unwrap();
        let read = read_audit(&buf[..]).unwrap();
        assert_eq!(written, read);
    }

    #[test]
    fn turn_line_fields_exact() {
        let mem = memory_with(1);
        let mut buf = Vec::new();
        write_audit(&mem, "f", &mut buf).unwrap();
        let first_line = String::from_utf8(buf.split(|&b| b == b'\n').next().unwrap().to_vec()).unwrap();
        // Field order on the wire matches the contract.
        let mut last = 0;
        for key in [
            "\"task_id\"",
            "\"seq\"",
            "\"role\"",
            "\"backend_id\"",
            "\"iteration\"",
            "\"started_at\"",
            "\"ended_at\"",
            "\"prompt_rendered\"",
            "\"response_raw\"",
        ] {
            let pos = first_line.find(key).unwrap_or_else(|| panic!("missing {key}"));
            assert!(pos >= last, "{key} out of order");
            last = pos;
        }
        let value: serde_json::Value = serde_json::from_str(&first_line).unwrap();
        assert_eq!(value["role"], "vision_suite");
        assert_eq!(value.as_object().unwrap().len(), 9);
    }

    #[test]
    fn empty_memory_rejected() {
        let task = VqaTask::new("t", ImageRef::from_bytes(vec![1], MediaType::Png), "Q?").unwrap();
        let mem = ConversationMemory::new(task);
        assert!(matches!(
            write_audit(&mem, "f", Vec::new()),
            Err(AuditError::EmptyMemory)
        ));
    }

    #[test]
    fn unwritable_sink_fails_without_touching_memory() {
        struct Broken;
        impl std::io::Write for Broken {
            fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("sink closed"))
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mem = memory_with(2);
        let before = mem.clone();
        assert!(matches!(
            write_audit(&mem, "f", Broken),
            Err(AuditError::Io(_))
        ));
        assert_eq!(mem, before);
    }

    #[test]
    fn summary_total_latency_matches_span() {
        let mem = memory_with(3);
        let mut buf = Vec::new();
        let trail = write_audit(&mem, "f", &mut buf).unwrap();
        // 3 turns at 25ms per clock tick: first start tick0, last end tick5.
        assert!((trail.total_latency_s - 0.125).abs() < 1e-9);
    }
}
