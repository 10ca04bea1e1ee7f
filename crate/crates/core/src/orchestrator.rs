//! The pipeline state machine: captioner, drafter, then K rounds of
//! inquirer → vision-suite fan-out → revisor, and finally the spokesman.
//!
//! Every backend call (and the local inquirer extraction) is committed to
//! the shared memory as exactly one turn, so a completed memory always
//! shows the role pattern
//! `captioner, drafter, (inquirer, vision_suite^|suite|, revisor)^K, spokesman`
//! and a turn count of `2 + K·(2 + |suite|) + 1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{format_time_binding, SharedClock};
use crate::gateway::{BackendConfig, BackendKind, ChatMessage, Gateway, GatewayError};
use crate::memory::{AgentTurn, ConversationMemory, MemoryError, Role};
use crate::parsing::{self, ParseError};
use crate::prompts::{Bindings, PromptError, PromptRegistry, TemplateId};
use crate::task::VqaTask;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("phase {phase}: {source}")]
    Gateway {
        phase: String,
        #[source]
        source: GatewayError,
    },
    #[error("phase {phase}: {source}")]
    Parse {
        phase: String,
        #[source]
        source: ParseError,
    },
    #[error("phase {phase}: {source}")]
    Prompt {
        phase: String,
        #[source]
        source: PromptError,
    },
    #[error("phase {phase}: missing context ({needs})")]
    MissingContext { phase: String, needs: String },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl PipelineError {
    /// The phase the failure occurred in, when one is attached.
    pub fn phase(&self) -> Option<&str> {
        match self {
            PipelineError::Gateway { phase, .. }
            | PipelineError::Parse { phase, .. }
            | PipelineError::Prompt { phase, .. }
            | PipelineError::MissingContext { phase, .. } => Some(phase),
            _ => None,
        }
    }
}

/// How much transcript each backbone prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    /// Accumulate the whole transcript (the default; the shared memory is
    /// meant to be seen in full).
    #[default]
    FullTranscript,
    /// Question, latest answer and current-round evidence only, for
    /// token-budget control.
    LastRound,
}

/// How the inquirer turns the latest response into a suite question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InquirerMode {
    /// Deterministic local extraction of the last question sentence.
    #[default]
    PureExtraction,
    /// Ask the backbone to extract the question.
    ModelMediated,
}

fn default_iterations() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub backbone: BackendConfig,
    pub captioner: BackendConfig,
    pub suite: Vec<BackendConfig>,
    #[serde(default)]
    pub judge: Option<BackendConfig>,
    /// Loop rounds K after the initial draft (the drafter is not a round).
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default)]
    pub context_policy: ContextPolicy,
    #[serde(default)]
    pub inquirer_mode: InquirerMode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.iterations < 1 {
            return Err(PipelineError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.suite.is_empty() {
            return Err(PipelineError::InvalidConfig("suite must be non-empty".into()));
        }
        if self.captioner.kind == BackendKind::ChatText {
            return Err(PipelineError::InvalidConfig(
                "captioner must be a vision-capable backend".into(),
            ));
        }
        if self.backbone.kind == BackendKind::ChatVision {
            return Err(PipelineError::InvalidConfig(
                "backbone must be a text backend".into(),
            ));
        }
        for cfg in std::iter::once(&self.backbone)
            .chain(std::iter::once(&self.captioner))
            .chain(self.suite.iter())
            .chain(self.judge.iter())
        {
            cfg.validate()
                .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub final_answer: String,
    pub memory: ConversationMemory,
    /// Phase key → wall-clock seconds, in execution order. Keys:
    /// `captioner`, `drafter`, `inquirer[i]`, `suite[i]`, `revisor[i]`,
    /// `spokesman`.
    pub per_phase_latency: Vec<(String, f64)>,
    pub iterations_run: u32,
}

/// The phases `run_phase` can drive. Loop phases infer their iteration
/// from the memory contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Captioner,
    Drafter,
    Inquirer,
    Suite,
    Revisor,
    Spokesman,
}

/// Expected memory length for a completed task: captioner + drafter +
/// K·(inquirer + |suite| + revisor) + spokesman.
pub fn expected_turn_count(iterations: u32, suite_len: usize) -> usize {
    2 + iterations as usize * (2 + suite_len) + 1
}

pub struct Pipeline {
    cfg: PipelineConfig,
    registry: Arc<PromptRegistry>,
    gateway: Arc<Gateway>,
    clock: SharedClock,
}

impl Pipeline {
    pub fn new(
        cfg: PipelineConfig,
        registry: Arc<PromptRegistry>,
        gateway: Arc<Gateway>,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let clock = gateway.clock().clone();
        Ok(Self {
            cfg,
            registry,
            gateway,
            clock,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Runs the full pipeline over one task.
    pub fn run_task(&self, task: VqaTask) -> Result<PipelineResult, PipelineError> {
        let mut memory = ConversationMemory::new(task);
        let mut per_phase_latency = Vec::new();
        let mut timed = |memory: &mut ConversationMemory,
                         phase: PhaseKind,
                         key: String|
         -> Result<(), PipelineError> {
            let before = memory.len();
            self.run_phase(memory, phase)?;
            per_phase_latency.push((key, phase_span_s(&memory.turns()[before..])));
            Ok(())
        };

        timed(&mut memory, PhaseKind::Captioner, "captioner".into())?;
        timed(&mut memory, PhaseKind::Drafter, "drafter".into())?;
        for i in 1..=self.cfg.iterations {
            timed(&mut memory, PhaseKind::Inquirer, format!("inquirer[{i}]"))?;
            timed(&mut memory, PhaseKind::Suite, format!("suite[{i}]"))?;
            timed(&mut memory, PhaseKind::Revisor, format!("revisor[{i}]"))?;
        }
        timed(&mut memory, PhaseKind::Spokesman, "spokesman".into())?;

        let final_answer = memory.latest_response(Role::Spokesman)?.to_string();
        Ok(PipelineResult {
            final_answer,
            memory,
            per_phase_latency,
            iterations_run: self.cfg.iterations,
        })
    }

    /// Executes one phase against the memory, appending exactly one turn
    /// (the suite phase appends one per suite backend).
    pub fn run_phase(
        &self,
        memory: &mut ConversationMemory,
        phase: PhaseKind,
    ) -> Result<(), PipelineError> {
        match phase {
            PhaseKind::Captioner => self.phase_captioner(memory),
            PhaseKind::Drafter => self.phase_drafter(memory),
            PhaseKind::Inquirer => self.phase_inquirer(memory),
            PhaseKind::Suite => self.phase_suite(memory),
            PhaseKind::Revisor => self.phase_revisor(memory),
            PhaseKind::Spokesman => self.phase_spokesman(memory),
        }
    }

    fn phase_captioner(&self, memory: &mut ConversationMemory) -> Result<(), PipelineError> {
        let phase = "captioner";
        let pair = self
            .registry
            .render(TemplateId::CaptionerUser, &Bindings::new().image())
            .map_err(|source| PipelineError::Prompt { phase: phase.into(), source })?;
        let prompt_rendered = transcript_text(&[(
            "user",
            format!("<image> {}", pair.user_text),
        )]);
        let image = memory.task().image.clone();
        let started = self.clock.now();
        let reply = self
            .gateway
            .vision_query(&self.cfg.captioner, &image, &pair.user_text)
            .map_err(|source| PipelineError::Gateway { phase: phase.into(), source })?;
        let ended = self.clock.now();
        memory.append_turn(AgentTurn::new(
            Role::Captioner,
            self.cfg.captioner.backend_id.clone(),
            prompt_rendered,
            reply.text,
            started,
            ended,
            0,
        )?);
        Ok(())
    }

    fn phase_drafter(&self, memory: &mut ConversationMemory) -> Result<(), PipelineError> {
        let phase = "drafter";
        let caption = memory
            .latest_response(Role::Captioner)
            .map_err(|_| PipelineError::MissingContext {
                phase: phase.into(),
                needs: "a captioner turn".into(),
            })?
            .to_string();
        let bindings = Bindings::new().time(format_time_binding(self.clock.now()));
        let system = self.render_text(TemplateId::DrafterSystem, &bindings, phase)?;
        let reflect = self.render_text(TemplateId::DrafterUser, &bindings, phase)?;

        let messages = vec![
            ChatMessage::system(system),
            ChatMessage::user(format!("User question: {}", memory.task().question)),
            ChatMessage::assistant(format!("Image caption: {caption}")),
            ChatMessage::user(reflect),
        ];
        let (reply, started, ended) = self.backbone_chat(&messages, phase)?;
        if let Err(e) = parsing::parse_draft(&reply.text) {
            tracing::warn!(phase, error = %e, "draft parse fell through; the inquirer may fail");
        }
        memory.append_turn(AgentTurn::new(
            Role::Drafter,
            self.cfg.backbone.backend_id.clone(),
            messages_transcript(&messages),
            reply.text,
            started,
            ended,
            0,
        )?);
        Ok(())
    }

    fn phase_inquirer(&self, memory: &mut ConversationMemory) -> Result<(), PipelineError> {
        let iteration = memory.count_role(Role::Revisor) as u32 + 1;
        let phase = format!("inquirer[{iteration}]");
        let latest = memory
            .latest_turn_of_any(&[Role::Drafter, Role::Revisor])
            .ok_or_else(|| PipelineError::MissingContext {
                phase: phase.clone(),
                needs: "a drafter or revisor turn".into(),
            })?
            .response_raw
            .clone();
        let instruction = self.render_text(TemplateId::InquirerUser, &Bindings::new(), &phase)?;

        match self.cfg.inquirer_mode {
            InquirerMode::PureExtraction => {
                let started = self.clock.now();
                let question = parsing::extract_question(&latest).map_err(|source| {
                    PipelineError::Parse {
                        phase: phase.clone(),
                        source,
                    }
                })?;
                let ended = self.clock.now();
                memory.append_turn(AgentTurn::new(
                    Role::Inquirer,
                    "local",
                    transcript_text(&[("user", instruction)]),
                    question,
                    started,
                    ended,
                    iteration,
                )?);
            }
            InquirerMode::ModelMediated => {
                let mut messages = self.backbone_context(memory);
                messages.push(ChatMessage::user(instruction));
                let (reply, started, ended) = self.backbone_chat(&messages, &phase)?;
                parsing::extract_question(&reply.text).map_err(|source| PipelineError::Parse {
                    phase: phase.clone(),
                    source,
                })?;
                memory.append_turn(AgentTurn::new(
                    Role::Inquirer,
                    self.cfg.backbone.backend_id.clone(),
                    messages_transcript(&messages),
                    reply.text,
                    started,
                    ended,
                    iteration,
                )?);
            }
        }
        Ok(())
    }

    fn phase_suite(&self, memory: &mut ConversationMemory) -> Result<(), PipelineError> {
        let inquirer = memory
            .latest_turn_of_any(&[Role::Inquirer])
            .cloned()
            .ok_or_else(|| PipelineError::MissingContext {
                phase: "suite".into(),
                needs: "an inquirer turn".into(),
            })?;
        let iteration = inquirer.iteration;
        let phase = format!("suite[{iteration}]");
        // Extraction is idempotent on already-extracted questions, so this
        // is the inquirer's question verbatim in pure-extraction mode.
        let question =
            parsing::extract_question(&inquirer.response_raw).map_err(|source| {
                PipelineError::Parse {
                    phase: phase.clone(),
                    source,
                }
            })?;
        let pair = self
            .registry
            .render(
                TemplateId::VisionUser,
                &Bindings::new().image().inquirer_question(question.clone()),
            )
            .map_err(|source| PipelineError::Prompt { phase: phase.clone(), source })?;
        let prompt_rendered = transcript_text(&[("user", format!("<image> {}", pair.user_text))]);
        let image = memory.task().image.clone();
        let evidence = self
            .gateway
            .fan_out(&self.cfg.suite, &image, &pair.user_text)
            .map_err(|source| PipelineError::Gateway { phase: phase.clone(), source })?;
        for item in evidence {
            memory.append_turn(AgentTurn::new(
                Role::VisionSuite,
                item.backend_id.clone(),
                prompt_rendered.clone(),
                item.display_text(),
                item.started_at,
                item.ended_at,
                iteration,
            )?);
        }
        Ok(())
    }

    fn phase_revisor(&self, memory: &mut ConversationMemory) -> Result<(), PipelineError> {
        let iteration = memory.count_role(Role::Revisor) as u32 + 1;
        let phase = format!("revisor[{iteration}]");
        let current_evidence = memory
            .turns()
            .iter()
            .filter(|t| t.role == Role::VisionSuite && t.iteration == iteration)
            .count();
        if current_evidence == 0 {
            return Err(PipelineError::MissingContext {
                phase,
                needs: "vision suite evidence for the current iteration".into(),
            });
        }
        let bindings = Bindings::new().time(format_time_binding(self.clock.now()));
        let system = self.render_text(TemplateId::RevisorSystem, &bindings, &phase)?;
        let reflect = self.render_text(TemplateId::RevisorUser, &bindings, &phase)?;

        let mut messages = vec![ChatMessage::system(system)];
        messages.extend(self.backbone_context(memory));
        messages.push(ChatMessage::user(reflect));

        let (reply, started, ended) = self.backbone_chat(&messages, &phase)?;
        let triple = parsing::parse_revision(&reply.text);
        if !triple.flags.word_limit_ok {
            tracing::warn!(phase, words = triple.word_count, "revision exceeds the 50-word limit");
        }
        if triple.flags.references_missing {
            tracing::warn!(phase, "revision has no References section");
        }
        memory.append_turn(AgentTurn::new(
            Role::Revisor,
            self.cfg.backbone.backend_id.clone(),
            messages_transcript(&messages),
            reply.text,
            started,
            ended,
            iteration,
        )?);
        Ok(())
    }

    fn phase_spokesman(&self, memory: &mut ConversationMemory) -> Result<(), PipelineError> {
        let phase = "spokesman";
        let last_revision = memory
            .latest_response(Role::Revisor)
            .map_err(|_| PipelineError::MissingContext {
                phase: phase.into(),
                needs: "a revisor turn".into(),
            })?
            .to_string();
        let bindings = Bindings::new().time(format_time_binding(self.clock.now()));
        let system = self.render_text(TemplateId::SpokesmanSystem, &bindings, phase)?;
        let instruction = self.render_text(TemplateId::SpokesmanUser, &bindings, phase)?;
        let messages = vec![
            ChatMessage::system(system),
            ChatMessage::assistant(last_revision),
            ChatMessage::user(instruction),
        ];
        let (reply, started, ended) = self.backbone_chat(&messages, phase)?;
        let iteration = self.cfg.iterations + 1;
        memory.append_turn(AgentTurn::new(
            Role::Spokesman,
            self.cfg.backbone.backend_id.clone(),
            messages_transcript(&messages),
            reply.text,
            started,
            ended,
            iteration,
        )?);
        Ok(())
    }

    /// Transcript context for backbone prompts, per the configured policy.
    /// The original question is re-stated as the leading user message; the
    /// caption and the backbone's own prior outputs are assistant turns;
    /// suite evidence becomes labeled tool-output user messages.
    fn backbone_context(&self, memory: &ConversationMemory) -> Vec<ChatMessage> {
        let question = ChatMessage::user(format!("User question: {}", memory.task().question));
        match self.cfg.context_policy {
            ContextPolicy::FullTranscript => {
                let mut messages = vec![question];
                let mut tool_index_in_iteration = 0u32;
                let mut current_iteration = 0u32;
                for turn in memory.turns() {
                    match turn.role {
                        Role::Captioner => messages.push(ChatMessage::assistant(format!(
                            "Image caption: {}",
                            turn.response_raw
                        ))),
                        Role::Drafter | Role::Revisor => {
                            messages.push(ChatMessage::assistant(turn.response_raw.clone()))
                        }
                        Role::VisionSuite => {
                            if turn.iteration != current_iteration {
                                current_iteration = turn.iteration;
                                tool_index_in_iteration = 0;
                            }
                            tool_index_in_iteration += 1;
                            messages.push(ChatMessage::user(format!(
                                "Tool output [{}] ({}): {}",
                                tool_index_in_iteration, turn.backend_id, turn.response_raw
                            )));
                        }
                        Role::Inquirer | Role::Spokesman | Role::Judge => {}
                    }
                }
                messages
            }
            ContextPolicy::LastRound => {
                let mut messages = vec![question];
                if let Some(latest) = memory.latest_turn_of_any(&[Role::Drafter, Role::Revisor]) {
                    messages.push(ChatMessage::assistant(latest.response_raw.clone()));
                }
                let current_iteration = memory
                    .turns()
                    .iter()
                    .rev()
                    .find(|t| t.role == Role::VisionSuite)
                    .map(|t| t.iteration);
                if let Some(iteration) = current_iteration {
                    let mut k = 0u32;
                    for turn in memory
                        .turns()
                        .iter()
                        .filter(|t| t.role == Role::VisionSuite && t.iteration == iteration)
                    {
                        k += 1;
                        messages.push(ChatMessage::user(format!(
                            "Tool output [{}] ({}): {}",
                            k, turn.backend_id, turn.response_raw
                        )));
                    }
                }
                messages
            }
        }
    }

    fn backbone_chat(
        &self,
        messages: &[ChatMessage],
        phase: &str,
    ) -> Result<(crate::gateway::ModelReply, chrono::DateTime<chrono::Utc>, chrono::DateTime<chrono::Utc>), PipelineError> {
        let started = self.clock.now();
        let reply = self
            .gateway
            .chat(&self.cfg.backbone, messages)
            .map_err(|source| PipelineError::Gateway {
                phase: phase.to_string(),
                source,
            })?;
        let ended = self.clock.now();
        Ok((reply, started, ended))
    }

    fn render_text(
        &self,
        id: TemplateId,
        bindings: &Bindings,
        phase: &str,
    ) -> Result<String, PipelineError> {
        let pair = self
            .registry
            .render(id, bindings)
            .map_err(|source| PipelineError::Prompt {
                phase: phase.to_string(),
                source,
            })?;
        Ok(pair.system_text.unwrap_or(pair.user_text))
    }
}

/// Wall-clock span covered by a slice of turns (suite turns overlap, so
/// this is max(end) − min(start)).
fn phase_span_s(turns: &[AgentTurn]) -> f64 {
    let start = turns.iter().map(|t| t.started_at).min();
    let end = turns.iter().map(|t| t.ended_at).max();
    match (start, end) {
        (Some(s), Some(e)) => (e - s).num_milliseconds().max(0) as f64 / 1000.0,
        _ => 0.0,
    }
}

fn messages_transcript(messages: &[ChatMessage]) -> String {
    let entries: Vec<(&str, String)> = messages
        .iter()
        .map(|m| {
            let role = match m.role() {
                crate::gateway::MessageRole::System => "system",
                crate::gateway::MessageRole::User => "user",
                crate::gateway::MessageRole::Assistant => "assistant",
            };
            let text = if m.image().is_some() {
                format!("<image> {}", m.text())
            } else {
                m.text().to_string()
            };
            (role, text)
        })
        .collect();
    transcript_text(&entries)
}

/// Audit rendering of a prompt: one `[role] text` line per message, with
/// `<image>` marking attachment positions.
fn transcript_text(entries: &[(&str, String)]) -> String {
    entries
        .iter()
        .map(|(role, text)| format!("[{role}] {text}"))
        .collect::<Vec<_>>()
        .join("\n")
}
