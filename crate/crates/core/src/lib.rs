//! Agentic visual question answering over pluggable vision-language backends.
//!
//! The engine wraps a text-only reasoning backbone and a suite of
//! vision-language backends in an iterated draft → inquire → cross-check →
//! revise loop, then has a spokesman produce the final answer. Every backend
//! call is recorded in an append-only conversation memory that serializes to
//! a line-delimited audit trail. An evaluation harness samples VQA records
//! per question type, scores free-form predictions with an LLM judge, and
//! aggregates accuracy/runtime matrices into report tables.
//!
//! Module map:
//! - [`task`], [`memory`], [`draft`], [`audit`] — domain types, shared
//!   conversation memory, audit trail.
//! - [`prompts`] — template registry with placeholder validation.
//! - [`gateway`] — uniform client over chat/vision backends, plus a
//!   deterministic scripted mock and concurrent suite fan-out.
//! - [`parsing`] — structure extraction from free-form model text.
//! - [`orchestrator`] — the pipeline state machine.
//! - [`eval`] — dataset ingestion, judging, aggregation, report emission.
//! - [`cli`], [`config`] — operator entry points.

pub mod audit;
pub mod cli;
pub mod clock;
pub mod config;
pub mod draft;
pub mod eval;
pub mod gateway;
pub mod memory;
pub mod orchestrator;
pub mod parsing;
pub mod prompts;
pub mod task;

pub use audit::{read_audit, write_audit, AuditTrail};
pub use clock::{Clock, FixedClock, StepClock, SystemClock};
pub use draft::{DraftTriple, ParseFlags, Reference};
pub use memory::{AgentTurn, ConversationMemory, Role};
pub use task::{ImageRef, MediaType, VqaTask};
