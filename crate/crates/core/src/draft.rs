//! Structured drafter/revisor output: answer, self-critique, follow-up
//! question, and (for revisions) numbered references.

use serde::{Deserialize, Serialize};

/// One numbered citation from a revision's References section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub index: u32,
    pub text: String,
}

/// Quality signals attached by the parsers. A set flag means the
/// corresponding section was absent or a template rule was broken;
/// parsing itself stays best-effort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFlags {
    pub critique_missing: bool,
    pub question_missing: bool,
    pub references_missing: bool,
    /// Answer is within the 50-word limit the revisor is held to.
    pub word_limit_ok: bool,
}

impl Default for ParseFlags {
    fn default() -> Self {
        Self {
            critique_missing: false,
            question_missing: false,
            references_missing: false,
            word_limit_ok: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftTriple {
    pub answer: String,
    pub critique: String,
    pub follow_up_question: String,
    pub references: Vec<Reference>,
    /// Whitespace-token count of `answer`.
    pub word_count: usize,
    pub flags: ParseFlags,
}

impl DraftTriple {
    /// Canonical numbered layout:
    ///
    /// ```text
    /// 1. <answer>
    /// 2. <critique>
    /// 3. <question>
    ///
    /// References:
    /// - [1] <text>
    /// ```
    ///
    /// The References block is emitted only when references exist, indices
    /// renumbered 1..n.
    pub fn to_numbered_text(&self) -> String {
        let mut out = format!(
            "1. {}\n2. {}\n3. {}",
            self.answer, self.critique, self.follow_up_question
        );
        if !self.references.is_empty() {
            out.push_str("\n\nReferences:");
            for (i, r) in self.references.iter().enumerate() {
                out.push_str(&format!("\n- [{}] {}", i + 1, r.text));
            }
        }
        out
    }
}
