//! Deterministic scripted backend.
//!
//! A script maps (role-tag, call-ordinal, question-key) to replies, so
//! identical runs produce identical transcripts. The role tag is inferred
//! from the message shape (system/user anchor lines of the fixed
//! templates); the question key is role-specific:
//!
//! - `vision` / `captioner`: the user text of the query
//! - `judge`: `"<ground truth>|<prediction>"` from the judge prompt lines
//! - `drafter` / `revisor` / `spokesman` / `inquirer` / `chat`: the last
//!   user message text (ordinal sequences are the usual addressing)
//!
//! Script file (JSON):
//!
//! ```json
//! {
//!   "delay_ms": 0,
//!   "roles": {
//!     "captioner": ["a caption"],
//!     "drafter":   ["1. answer 2. critique 3. question?"],
//!     "vision":    {"by_question": {"Q?": "A"}, "sequence": ["s0"], "default": "fallback"},
//!     "revisor":   ["r1", "r2", "r3"],
//!     "spokesman": ["FINAL"],
//!     "judge":     {"default": "1"}
//!   }
//! }
//! ```
//!
//! A role section must be resolvable (a non-empty sequence, a question
//! table, or a default) — empty sections are rejected at load. Entries may
//! be plain strings or `{"text"|"error", "delay_ms"}` objects; `error`
//! entries simulate a backend failure, `delay_ms` simulates latency.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ChatMessage, GatewayError, MessageRole};

pub const ROLE_TAGS: [&str; 7] = [
    "captioner",
    "drafter",
    "inquirer",
    "vision",
    "revisor",
    "spokesman",
    "judge",
];
const FALLBACK_TAG: &str = "chat";

/// The role a mock call was classified as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MockRoleTag(pub &'static str);

#[derive(Debug, Deserialize)]
struct ScriptFileRaw {
    #[serde(default)]
    delay_ms: Option<u64>,
    roles: BTreeMap<String, RoleSectionRaw>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RoleSectionRaw {
    Seq(Vec<EntryRaw>),
    Table {
        #[serde(default)]
        by_question: BTreeMap<String, EntryRaw>,
        #[serde(default)]
        sequence: Vec<EntryRaw>,
        #[serde(default)]
        default: Option<EntryRaw>,
        #[serde(default)]
        delay_ms: Option<u64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum EntryRaw {
    Text(String),
    Detail {
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        error: Option<String>,
        #[serde(default)]
        delay_ms: Option<u64>,
    },
}

#[derive(Debug, Clone)]
pub(super) struct Entry {
    text: Option<String>,
    error: Option<String>,
    delay_ms: Option<u64>,
}

#[derive(Debug, Clone)]
struct RoleSection {
    by_question: BTreeMap<String, Entry>,
    sequence: Vec<Entry>,
    default: Option<Entry>,
    delay_ms: Option<u64>,
}

/// A validated script.
#[derive(Debug, Clone)]
pub struct MockScript {
    delay_ms: Option<u64>,
    roles: BTreeMap<String, RoleSection>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let parse_err = |message: String| GatewayError::ScriptParse {
            path: path.to_path_buf(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| parse_err(e.to_string()))?;
        let file: ScriptFileRaw =
            serde_json::from_str(&raw).map_err(|e| parse_err(e.to_string()))?;
        if file.roles.is_empty() {
            return Err(parse_err("script defines no roles".into()));
        }
        let mut roles = BTreeMap::new();
        for (name, section) in file.roles {
            if !ROLE_TAGS.contains(&name.as_str()) && name != FALLBACK_TAG {
                return Err(parse_err(format!("unknown role tag {name:?}")));
            }
            let section = convert_section(section)
                .map_err(|m| parse_err(format!("role {name:?}: {m}")))?;
            if section.by_question.is_empty()
                && section.sequence.is_empty()
                && section.default.is_none()
            {
                return Err(parse_err(format!(
                    "role {name:?} defines no replies; scripts must be total"
                )));
            }
            roles.insert(name, section);
        }
        Ok(Self {
            delay_ms: file.delay_ms,
            roles,
        })
    }
}

fn convert_entry(raw: EntryRaw) -> Result<Entry, String> {
    match raw {
        EntryRaw::Text(text) => Ok(Entry {
            text: Some(text),
            error: None,
            delay_ms: None,
        }),
        EntryRaw::Detail {
            text,
            error,
            delay_ms,
        } => {
            if text.is_some() == error.is_some() {
                return Err("entry must set exactly one of text/error".into());
            }
            Ok(Entry {
                text,
                error,
                delay_ms,
            })
        }
    }
}

fn convert_section(raw: RoleSectionRaw) -> Result<RoleSection, String> {
    match raw {
        RoleSectionRaw::Seq(entries) => Ok(RoleSection {
            by_question: BTreeMap::new(),
            sequence: entries
                .into_iter()
                .map(convert_entry)
                .collect::<Result<_, _>>()?,
            default: None,
            delay_ms: None,
        }),
        RoleSectionRaw::Table {
            by_question,
            sequence,
            default,
            delay_ms,
        } => Ok(RoleSection {
            by_question: by_question
                .into_iter()
                .map(|(k, v)| convert_entry(v).map(|e| (k, e)))
                .collect::<Result<_, _>>()?,
            sequence: sequence
                .into_iter()
                .map(convert_entry)
                .collect::<Result<_, _>>()?,
            default: default.map(convert_entry).transpose()?,
            delay_ms,
        }),
    }
}

pub(super) struct MockBackend {
    path: PathBuf,
    script: MockScript,
    counters: Mutex<HashMap<String, usize>>,
}

impl MockBackend {
    pub(super) fn load(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self {
            path: path.to_path_buf(),
            script: MockScript::load(path)?,
            counters: Mutex::new(HashMap::new()),
        })
    }

    pub(super) fn reply(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let (tag, key) = classify_call(messages);
        let ordinal = {
            let mut counters = self.counters.lock().unwrap();
            let counter = counters.entry(tag.to_string()).or_insert(0);
            let ordinal = *counter;
            *counter += 1;
            ordinal
        };
        let section = self
            .script
            .roles
            .get(tag)
            .or_else(|| self.script.roles.get(FALLBACK_TAG))
            .ok_or_else(|| GatewayError::MockKeyMissing {
                role: tag.to_string(),
                ordinal,
                question: key.clone(),
            })?;
        let entry = section
            .by_question
            .get(&key)
            .or_else(|| section.sequence.get(ordinal))
            .or(section.default.as_ref())
            .ok_or_else(|| GatewayError::MockKeyMissing {
                role: tag.to_string(),
                ordinal,
                question: key.clone(),
            })?;

        let delay = entry
            .delay_ms
            .or(section.delay_ms)
            .or(self.script.delay_ms)
            .unwrap_or(0);
        if delay > 0 {
            std::thread::sleep(std::time::Duration::from_millis(delay));
        }
        if let Some(error) = &entry.error {
            return Err(GatewayError::Transport {
                backend_id: format!("mock:{}", self.path.display()),
                message: error.clone(),
            });
        }
        Ok(entry.text.clone().expect("entry has text or error"))
    }
}

const CAPTION_REQUEST: &str = "Describe every details in the image.";
const JUDGE_ANCHOR: &str = "Does the predicted answer match the ground truth?";
const REVISOR_ANCHOR: &str = "multiple tools' outputs";
const EXPERT_PREFIX: &str = "You are expert";
const SPOKESMAN_PREFIX: &str = "You are a helpful AI assistant";
const INQUIRER_ANCHOR: &str = "Extract one question from the latest response";

/// Infers (role tag, question key) from the message shape. The fixed
/// template anchor lines make this total for every pipeline call; anything
/// unrecognized falls back to the `chat` tag.
fn classify_call(messages: &[ChatMessage]) -> (&'static str, String) {
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.role() == MessageRole::User);
    let last_user_text = last_user.map(|m| m.text().to_string()).unwrap_or_default();
    let system_text = messages
        .iter()
        .find(|m| m.role() == MessageRole::System)
        .map(|m| m.text())
        .unwrap_or_default();
    let has_image = messages.iter().any(|m| m.image().is_some());

    if has_image {
        if last_user_text == CAPTION_REQUEST {
            return ("captioner", last_user_text);
        }
        return ("vision", last_user_text);
    }
    if last_user_text.contains(JUDGE_ANCHOR) {
        return ("judge", judge_key(&last_user_text));
    }
    if system_text.contains(REVISOR_ANCHOR) {
        return ("revisor", last_user_text);
    }
    if system_text.starts_with(EXPERT_PREFIX) {
        return ("drafter", last_user_text);
    }
    if system_text.starts_with(SPOKESMAN_PREFIX) {
        return ("spokesman", last_user_text);
    }
    if last_user_text.contains(INQUIRER_ANCHOR) {
        return ("inquirer", last_user_text);
    }
    (FALLBACK_TAG, last_user_text)
}

/// `"<ground truth>|<prediction>"`, letting scripts key judge verdicts on
/// what is being compared.
fn judge_key(prompt: &str) -> String {
    let field = |prefix: &str| {
        prompt
            .lines()
            .find_map(|l| l.strip_prefix(prefix))
            .unwrap_or_default()
            .trim()
            .to_string()
    };
    format!(
        "{}|{}",
        field("Ground Truth Answer:"),
        field("Predicted Answer:")
    )
}
