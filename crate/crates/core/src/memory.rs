//! Shared conversation memory: the append-only transcript of agent turns.
//!
//! One memory belongs to exactly one task. Turns are committed sequentially
//! by the pipeline and never mutated or removed afterwards; snapshots are
//! plain clones. The memory stores raw model text, not parsed structures,
//! so the audit always shows what the model actually said.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::VqaTask;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("no turn with role {0} exists")]
    NoSuchTurn(Role),
    #[error("turn ended_at precedes started_at")]
    InvalidTimestamps,
}

/// The agent role that produced a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Captioner,
    Drafter,
    Inquirer,
    VisionSuite,
    Revisor,
    Spokesman,
    Judge,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Captioner => "captioner",
            Role::Drafter => "drafter",
            Role::Inquirer => "inquirer",
            Role::VisionSuite => "vision_suite",
            Role::Revisor => "revisor",
            Role::Spokesman => "spokesman",
            Role::Judge => "judge",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Self> {
        Some(match s {
            "captioner" => Role::Captioner,
            "drafter" => Role::Drafter,
            "inquirer" => Role::Inquirer,
            "vision_suite" => Role::VisionSuite,
            "revisor" => Role::Revisor,
            "spokesman" => Role::Spokesman,
            "judge" => Role::Judge,
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One completed backend (or local) call.
///
/// `iteration` is 0 for the captioner and drafter, 1..K for loop roles and
/// K+1 for the spokesman.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub role: Role,
    pub backend_id: String,
    pub prompt_rendered: String,
    pub response_raw: String,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub iteration: u32,
}

impl AgentTurn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        role: Role,
        backend_id: impl Into<String>,
        prompt_rendered: impl Into<String>,
        response_raw: impl Into<String>,
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
        iteration: u32,
    ) -> Result<Self, MemoryError> {
        if ended_at < started_at {
            return Err(MemoryError::InvalidTimestamps);
        }
        Ok(Self {
            role,
            backend_id: backend_id.into(),
            prompt_rendered: prompt_rendered.into(),
            response_raw: response_raw.into(),
            started_at,
            ended_at,
            iteration,
        })
    }

    pub fn latency_s(&self) -> f64 {
        (self.ended_at - self.started_at).num_milliseconds() as f64 / 1000.0
    }
}

/// Ordered transcript shared by all roles of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationMemory {
    task: VqaTask,
    turns: Vec<AgentTurn>,
}

impl ConversationMemory {
    pub fn new(task: VqaTask) -> Self {
        Self {
            task,
            turns: Vec::new(),
        }
    }

    pub fn task(&self) -> &VqaTask {
        &self.task
    }

    pub fn turns(&self) -> &[AgentTurn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Commits a turn. Turns are only ever appended; prior turns are
    /// immutable through the public surface.
    pub fn append_turn(&mut self, turn: AgentTurn) {
        self.turns.push(turn);
    }

    /// Raw text of the most recent turn with the given role.
    pub fn latest_response(&self, role: Role) -> Result<&str, MemoryError> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == role)
            .map(|t| t.response_raw.as_str())
            .ok_or(MemoryError::NoSuchTurn(role))
    }

    /// Most recent turn among any of the given roles.
    pub fn latest_turn_of_any(&self, roles: &[Role]) -> Option<&AgentTurn> {
        self.turns.iter().rev().find(|t| roles.contains(&t.role))
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.turns.iter().filter(|t| t.role == role).count()
    }

    /// Wall-clock span from the first turn's start to the last turn's end.
    pub fn total_latency_s(&self) -> f64 {
        match (self.turns.first(), self.turns.last()) {
            (Some(first), Some(last)) => {
                (last.ended_at - first.started_at).num_milliseconds() as f64 / 1000.0
            }
            _ => 0.0,
        }
    }
}
