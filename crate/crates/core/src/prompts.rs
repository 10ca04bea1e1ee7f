//! Prompt template registry.
//!
//! Templates are stored as external text assets (one file per id, a 2-line
//! header followed by the verbatim body) so the registry contents can be
//! diffed without touching code. The registry is immutable after load and
//! rendering is pure.
//!
//! Recognized placeholders: `{time}`, `{question}`, `{ground_truth}`,
//! `{prediction}`, `{inquirer_question}`, and the `<image>` sentinel, which
//! never reaches the model as literal text — rendering removes it and
//! reports the attachment position instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const KNOWN_PLACEHOLDERS: [&str; 6] = [
    "time",
    "question",
    "ground_truth",
    "prediction",
    "inquirer_question",
    "image",
];

const IMAGE_TOKEN: &str = "<image>";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing binding for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("unknown placeholder name {0:?}")]
    UnknownPlaceholder(String),
    #[error("template {id} malformed: {detail}")]
    MalformedTemplate { id: String, detail: String },
    #[error("failed to read template {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    CaptionerUser,
    DrafterSystem,
    DrafterUser,
    InquirerUser,
    VisionUser,
    RevisorSystem,
    RevisorUser,
    SpokesmanSystem,
    SpokesmanUser,
    JudgeUser,
}

/// Whether a template fills the system or the user slot of a chat turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    System,
    User,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::CaptionerUser,
        TemplateId::DrafterSystem,
        TemplateId::DrafterUser,
        TemplateId::InquirerUser,
        TemplateId::VisionUser,
        TemplateId::RevisorSystem,
        TemplateId::RevisorUser,
        TemplateId::SpokesmanSystem,
        TemplateId::SpokesmanUser,
        TemplateId::JudgeUser,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::CaptionerUser => "captioner_user",
            TemplateId::DrafterSystem => "drafter_system",
            TemplateId::DrafterUser => "drafter_user",
            TemplateId::InquirerUser => "inquirer_user",
            TemplateId::VisionUser => "vision_user",
            TemplateId::RevisorSystem => "revisor_system",
            TemplateId::RevisorUser => "revisor_user",
            TemplateId::SpokesmanSystem => "spokesman_system",
            TemplateId::SpokesmanUser => "spokesman_user",
            TemplateId::JudgeUser => "judge_user",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PromptError> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }

    pub fn kind(&self) -> TemplateKind {
        match self {
            TemplateId::DrafterSystem
            | TemplateId::RevisorSystem
            | TemplateId::SpokesmanSystem => TemplateKind::System,
            _ => TemplateKind::User,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The agent roles a prompt pair can be rendered for. Each maps to an
/// optional system template and a user template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptRole {
    Captioner,
    Drafter,
    Inquirer,
    Vision,
    Revisor,
    Spokesman,
    Judge,
}

impl PromptRole {
    pub fn template_ids(&self) -> (Option<TemplateId>, TemplateId) {
        match self {
            PromptRole::Captioner => (None, TemplateId::CaptionerUser),
            PromptRole::Drafter => (Some(TemplateId::DrafterSystem), TemplateId::DrafterUser),
            PromptRole::Inquirer => (None, TemplateId::InquirerUser),
            PromptRole::Vision => (None, TemplateId::VisionUser),
            PromptRole::Revisor => (Some(TemplateId::RevisorSystem), TemplateId::RevisorUser),
            PromptRole::Spokesman => {
                (Some(TemplateId::SpokesmanSystem), TemplateId::SpokesmanUser)
            }
            PromptRole::Judge => (None, TemplateId::JudgeUser),
        }
    }
}

/// Values for the placeholders a render needs. Placeholder names are
/// validated on insertion, so a `Bindings` never carries an unknown name.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    values: BTreeMap<String, String>,
    image: bool,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn time(self, v: impl Into<String>) -> Self {
        self.with_known("time", v.into())
    }

    pub fn question(self, v: impl Into<String>) -> Self {
        self.with_known("question", v.into())
    }

    pub fn ground_truth(self, v: impl Into<String>) -> Self {
        self.with_known("ground_truth", v.into())
    }

    pub fn prediction(self, v: impl Into<String>) -> Self {
        self.with_known("prediction", v.into())
    }

    pub fn inquirer_question(self, v: impl Into<String>) -> Self {
        self.with_known("inquirer_question", v.into())
    }

    /// Marks that an image will be attached at the template's image slot.
    pub fn image(mut self) -> Self {
        self.image = true;
        self
    }

    /// Dynamic entry point used by the CLI and language bindings.
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), PromptError> {
        if name == "image" {
            self.image = true;
            return Ok(());
        }
        if !KNOWN_PLACEHOLDERS.contains(&name) {
            return Err(PromptError::UnknownPlaceholder(name.to_string()));
        }
        self.values.insert(name.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn has_image(&self) -> bool {
        self.image
    }

    fn with_known(mut self, name: &str, value: String) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }
}

/// A rendered system/user pair. `image_slot` is the byte offset in
/// `user_text` where the image attaches; the sentinel itself is removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub system_text: Option<String>,
    pub user_text: String,
    pub image_slot: Option<usize>,
}

#[derive(Debug, Clone)]
struct Template {
    body: String,
    placeholders: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<TemplateId, Template>,
    source_dir: PathBuf,
}

impl PromptRegistry {
    /// Directory the registry loads from when none is configured:
    /// `ARGUS_TEMPLATE_DIR` if set, else the assets bundled with this crate.
    pub fn default_dir() -> PathBuf {
        if let Ok(dir) = std::env::var("ARGUS_TEMPLATE_DIR") {
            if !dir.trim().is_empty() {
                return PathBuf::from(dir);
            }
        }
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("assets")
            .join("templates")
    }

    pub fn load_default() -> Result<Self, PromptError> {
        Self::load_dir(Self::default_dir())
    }

    /// Loads and validates every template. Fails if a file is missing, its
    /// header disagrees with the body scan, or the body contains an
    /// unrecognized placeholder token.
    pub fn load_dir(dir: impl Into<PathBuf>) -> Result<Self, PromptError> {
        let dir = dir.into();
        let mut templates = BTreeMap::new();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            let raw = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.clone(),
                source,
            })?;
            templates.insert(id, parse_asset(id, &raw)?);
        }
        Ok(Self {
            templates,
            source_dir: dir,
        })
    }

    pub fn source_dir(&self) -> &Path {
        &self.source_dir
    }

    /// Verbatim template body, as loaded from disk (header stripped).
    pub fn raw(&self, id: TemplateId) -> &str {
        &self.templates[&id].body
    }

    /// Placeholder set of one template, as found by scanning its body.
    pub fn placeholders(&self, id: TemplateId) -> &BTreeSet<String> {
        &self.templates[&id].placeholders
    }

    /// Re-scans every template and returns `(id, placeholder set)` pairs.
    pub fn validate_registry(&self) -> Result<Vec<(TemplateId, BTreeSet<String>)>, PromptError> {
        let mut out = Vec::with_capacity(TemplateId::ALL.len());
        for id in TemplateId::ALL {
            let scanned = scan_placeholders(id, &self.templates[&id].body)?;
            out.push((id, scanned));
        }
        Ok(out)
    }

    /// Renders one template. System-kind ids fill `system_text` and leave
    /// `user_text` empty; user-kind ids fill `user_text` (with `system_text`
    /// absent — roles without a system prompt never get one).
    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<PromptPair, PromptError> {
        let template = &self.templates[&id];
        let (text, image_slot) = substitute(&template.body, &template.placeholders, bindings)?;
        Ok(match id.kind() {
            TemplateKind::System => PromptPair {
                system_text: Some(text),
                user_text: String::new(),
                image_slot: None,
            },
            TemplateKind::User => PromptPair {
                system_text: None,
                user_text: text,
                image_slot,
            },
        })
    }

    /// Renders the full system/user pair for a role.
    pub fn render_role(
        &self,
        role: PromptRole,
        bindings: &Bindings,
    ) -> Result<PromptPair, PromptError> {
        let (system_id, user_id) = role.template_ids();
        let system_text = match system_id {
            Some(id) => self.render(id, bindings)?.system_text,
            None => None,
        };
        let user = self.render(user_id, bindings)?;
        Ok(PromptPair {
            system_text,
            user_text: user.user_text,
            image_slot: user.image_slot,
        })
    }
}

fn parse_asset(id: TemplateId, raw: &str) -> Result<Template, PromptError> {
    let malformed = |detail: String| PromptError::MalformedTemplate {
        id: id.as_str().to_string(),
        detail,
    };
    let mut lines = raw.splitn(3, '\n');
    let id_line = lines.next().unwrap_or_default().trim();
    let placeholder_line = lines
        .next()
        .ok_or_else(|| malformed("missing header lines".into()))?
        .trim();
    let body = lines
        .next()
        .ok_or_else(|| malformed("missing template body".into()))?;
    let body = body.strip_suffix('\n').unwrap_or(body).to_string();

    let declared_id = id_line
        .strip_prefix("id:")
        .ok_or_else(|| malformed(format!("bad id header line {id_line:?}")))?
        .trim();
    if declared_id != id.as_str() {
        return Err(malformed(format!(
            "header id {declared_id:?} does not match file name"
        )));
    }
    let declared: BTreeSet<String> = placeholder_line
        .strip_prefix("placeholders:")
        .ok_or_else(|| malformed(format!("bad placeholder header line {placeholder_line:?}")))?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let scanned = scan_placeholders(id, &body)?;
    if declared != scanned {
        return Err(malformed(format!(
            "header declares {declared:?} but body uses {scanned:?}"
        )));
    }
    Ok(Template {
        body,
        placeholders: scanned,
    })
}

/// Finds every `{name}` token plus the `<image>` sentinel. Unrecognized
/// names are rejected.
fn scan_placeholders(id: TemplateId, body: &str) -> Result<BTreeSet<String>, PromptError> {
    let mut found = BTreeSet::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if body[i..].starts_with(IMAGE_TOKEN) {
            found.insert("image".to_string());
            i += IMAGE_TOKEN.len();
            continue;
        }
        if bytes[i] == b'{' {
            if let Some(end) = body[i + 1..].find('}') {
                let name = &body[i + 1..i + 1 + end];
                if name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_')
                    && !name.is_empty()
                {
                    if !KNOWN_PLACEHOLDERS.contains(&name) || name == "image" {
                        return Err(PromptError::MalformedTemplate {
                            id: id.as_str().to_string(),
                            detail: format!("unrecognized placeholder {{{name}}}"),
                        });
                    }
                    found.insert(name.to_string());
                    i += end + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    Ok(found)
}

/// Single left-to-right pass; substituted values are never re-scanned.
fn substitute(
    body: &str,
    placeholders: &BTreeSet<String>,
    bindings: &Bindings,
) -> Result<(String, Option<usize>), PromptError> {
    for name in placeholders {
        if name == "image" {
            if !bindings.has_image() {
                return Err(PromptError::MissingBinding("image".to_string()));
            }
        } else if bindings.get(name).is_none() {
            return Err(PromptError::MissingBinding(name.clone()));
        }
    }

    let mut out = String::with_capacity(body.len());
    let mut image_slot = None;
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if body[i..].starts_with(IMAGE_TOKEN) {
            image_slot = Some(out.len());
            i += IMAGE_TOKEN.len();
            // The templates write "<image> text"; drop the separator space
            // so the sentinel leaves no trace in the rendered text.
            if bytes.get(i) == Some(&b' ') {
                i += 1;
            }
            continue;
        }
        if bytes[i] == b'{' {
            if let Some(end) = body[i + 1..].find('}') {
                let name = &body[i + 1..i + 1 + end];
                if placeholders.contains(name) && name != "image" {
                    out.push_str(bindings.get(name).expect("checked above"));
                    i += end + 2;
                    continue;
                }
            }
        }
        let ch = body[i..].chars().next().expect("in-bounds char");
        out.push(ch);
        i += ch.len_utf8();
    }
    Ok((out, image_slot))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> PromptRegistry {
        PromptRegistry::load_default().expect("bundled templates load")
    }

    #[test]
    fn judge_render_contains_verdict_instruction() {
        let pair = registry()
            .render(
                TemplateId::JudgeUser,
                &Bindings::new()
                    .question("Q")
                    .ground_truth("football")
                    .prediction("soccer"),
            )
            .unwrap();
        assert!(pair.system_text.is_none());
        assert!(pair
            .user_text
            .contains("Answer 1 for match and 0 for not match."));
        assert!(pair.user_text.contains("Ground Truth Answer: football"));
        assert!(pair.user_text.contains("Predicted Answer: soccer"));
    }

    #[test]
    fn captioner_render_strips_image_token() {
        let pair = registry()
            .render(TemplateId::CaptionerUser, &Bindings::new().image())
            .unwrap();
        assert_eq!(pair.user_text, "Describe every details in the image.");
        assert_eq!(pair.image_slot, Some(0));
    }

    #[test]
    fn drafter_system_requires_time() {
        let err = registry()
            .render(TemplateId::DrafterSystem, &Bindings::new())
            .unwrap_err();
        assert!(matches!(err, PromptError::MissingBinding(name) if name == "time"));
    }

    #[test]
    fn vision_render_is_question_with_leading_slot() {
        let pair = registry()
            .render(
                TemplateId::VisionUser,
                &Bindings::new().image().inquirer_question("How many planes?"),
            )
            .unwrap();
        assert_eq!(pair.user_text, "How many planes?");
        assert_eq!(pair.image_slot, Some(0));
    }

    #[test]
    fn placeholder_sets_match_contract() {
        let reg = registry();
        let scan = reg.validate_registry().unwrap();
        let get = |id: TemplateId| {
            scan.iter()
                .find(|(i, _)| *i == id)
                .map(|(_, s)| s.iter().cloned().collect::<Vec<_>>())
                .unwrap()
        };
        assert_eq!(
            get(TemplateId::JudgeUser),
            vec!["ground_truth", "prediction", "question"]
        );
        assert_eq!(get(TemplateId::RevisorSystem), vec!["time"]);
        assert_eq!(
            get(TemplateId::VisionUser),
            vec!["image", "inquirer_question"]
        );
        assert_eq!(get(TemplateId::DrafterUser), Vec::<String>::new());
    }

    #[test]
    fn unknown_placeholder_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        for id in TemplateId::ALL {
            let src = PromptRegistry::default_dir().join(format!("{}.txt", id.as_str()));
            std::fs::copy(src, dir.path().join(format!("{}.txt", id.as_str()))).unwrap();
        }
        std::fs::write(
            dir.path().join("inquirer_user.txt"),
            "id: inquirer_user\nplaceholders: typo\nExtract {typo} from the latest response.\n",
        )
        .unwrap();
        let err = PromptRegistry::load_dir(dir.path()).unwrap_err();
        assert!(matches!(err, PromptError::MalformedTemplate { .. }));
    }

    #[test]
    fn header_body_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for id in TemplateId::ALL {
            let src = PromptRegistry::default_dir().join(format!("{}.txt", id.as_str()));
            std::fs::copy(src, dir.path().join(format!("{}.txt", id.as_str()))).unwrap();
        }
        std::fs::write(
            dir.path().join("drafter_user.txt"),
            "id: drafter_user\nplaceholders: time\nReflect on the actions taken thus far.\n",
        )
        .unwrap();
        assert!(PromptRegistry::load_dir(dir.path()).is_err());
    }

    #[test]
    fn rendering_is_idempotent() {
        let reg = registry();
        let b = Bindings::new().time("2026-01-02 03:04:05 UTC");
        let a1 = reg.render(TemplateId::RevisorSystem, &b).unwrap();
        let a2 = reg.render(TemplateId::RevisorSystem, &b).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn bindings_reject_unknown_names() {
        let mut b = Bindings::new();
        assert!(matches!(
            b.set("typo", "x"),
            Err(PromptError::UnknownPlaceholder(_))
        ));
        b.set("time", "now").unwrap();
        assert_eq!(b.get("time"), Some("now"));
    }

    #[test]
    fn render_role_composes_pairs() {
        let reg = registry();
        let pair = reg
            .render_role(PromptRole::Drafter, &Bindings::new().time("T"))
            .unwrap();
        assert!(pair.system_text.as_deref().unwrap().contains("Current time: T"));
        assert_eq!(
            pair.user_text,
            "Reflect on the user's original question and the actions taken thus far."
        );
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let reg = registry();
        let pair = reg
            .render(
                TemplateId::JudgeUser,
                &Bindings::new()
                    .question("{prediction}")
                    .ground_truth("g")
                    .prediction("p"),
            )
            .unwrap();
        assert!(pair.user_text.contains("Question: {prediction}\n"));
    }
}
