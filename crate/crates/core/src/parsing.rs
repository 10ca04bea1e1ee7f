//! Structure extraction from free-form model text.
//!
//! Backbone models vary in formatting, so section detection runs ordered
//! heuristics — numbered list `1./2./3.`, then decorated/keyword headers
//! (`Answer:`, `Critique:`, `Question:`) — and the first that matches wins.
//! Everything here is a pure function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::draft::{DraftTriple, ParseFlags, Reference};

/// Word limit the revisor template holds answers to.
pub const ANSWER_WORD_LIMIT: usize = 50;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no interrogative content found")]
    NoQuestionFound,
    #[error("no standalone 0/1 verdict token found")]
    UnparseableVerdict,
}

/// Binary semantic-match verdict from the judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    NoMatch,
}

const SENTENCE_TERMINATORS: [char; 4] = ['?', '!', '.', '\n'];

/// Returns the last sentence terminated by `?`, trimmed. A sentence is the
/// maximal span ending at `?`, `!`, `.` or a newline.
pub fn extract_question(text: &str) -> Result<String, ParseError> {
    let last_q = text.rfind('?').ok_or(ParseError::NoQuestionFound)?;
    let start = text[..last_q]
        .rfind(SENTENCE_TERMINATORS)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let question = text[start..=last_q].trim();
    if question == "?" {
        return Err(ParseError::NoQuestionFound);
    }
    Ok(question.to_string())
}

/// Parses the drafter's reply into answer / critique / follow-up question.
///
/// Errors only when no interrogative content exists anywhere in the text.
pub fn parse_draft(text: &str) -> Result<DraftTriple, ParseError> {
    let (triple, _) = parse_sections(text, FallbackAnswer::FirstParagraph);
    if triple.flags.question_missing {
        return Err(ParseError::NoQuestionFound);
    }
    Ok(triple)
}

/// Parses a revisor reply. Total: always returns a triple, with flags
/// carrying quality signals (missing References, missing question, answers
/// over the word limit).
pub fn parse_revision(text: &str) -> DraftTriple {
    let (content, references, references_found) = split_references(text);
    let (mut triple, _) = parse_sections(&content, FallbackAnswer::WholeContent);
    triple.references = references;
    triple.flags.references_missing = !references_found;
    triple
}

/// Maps judge output to a verdict: the first standalone `0` or `1` token
/// (not adjacent to other digits) decides.
pub fn parse_judge_verdict(text: &str) -> Result<Verdict, ParseError> {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b != b'0' && b != b'1' {
            continue;
        }
        let prev_digit = i > 0 && bytes[i - 1].is_ascii_digit();
        let next_digit = bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
        if prev_digit || next_digit {
            continue;
        }
        return Ok(if b == b'1' {
            Verdict::Match
        } else {
            Verdict::NoMatch
        });
    }
    Err(ParseError::UnparseableVerdict)
}

/// Whitespace-token count, with any References section stripped first (the
/// revisor template excludes it from the word limit).
pub fn count_words(text: &str) -> usize {
    let (content, _, _) = split_references(text);
    content.split_whitespace().count()
}

enum FallbackAnswer {
    FirstParagraph,
    WholeContent,
}

fn parse_sections(text: &str, fallback: FallbackAnswer) -> (DraftTriple, &'static str) {
    if let Some((answer, critique, question_part)) = numbered_sections(text) {
        let triple = assemble(text, answer, critique, question_part, false);
        return (triple, "numbered");
    }
    if let Some((answer, critique, question_part)) = header_sections(text) {
        let critique_missing = critique.is_none();
        let triple = assemble(
            text,
            answer,
            critique.unwrap_or_default(),
            question_part,
            critique_missing,
        );
        return (triple, "headers");
    }
    let answer = match fallback {
        FallbackAnswer::FirstParagraph => first_paragraph(text),
        FallbackAnswer::WholeContent => text.trim().to_string(),
    };
    let (question, question_missing) = match extract_question(text) {
        Ok(q) => (q, false),
        Err(_) => (String::new(), true),
    };
    let word_count = answer.split_whitespace().count();
    (
        DraftTriple {
            answer,
            critique: String::new(),
            follow_up_question: question,
            references: Vec::new(),
            word_count,
            flags: ParseFlags {
                critique_missing: true,
                question_missing,
                references_missing: false,
                word_limit_ok: word_count <= ANSWER_WORD_LIMIT,
            },
        },
        "fallback",
    )
}

fn assemble(
    full_text: &str,
    answer: String,
    critique: String,
    question_part: String,
    critique_missing: bool,
) -> DraftTriple {
    // The question section should already be interrogative; otherwise pull
    // the last question out of it, then out of the whole text.
    let (question, question_missing) = if question_part.trim().ends_with('?') {
        (question_part.trim().to_string(), false)
    } else {
        match extract_question(&question_part).or_else(|_| extract_question(full_text)) {
            Ok(q) => (q, false),
            Err(_) => (String::new(), true),
        }
    };
    let word_count = answer.split_whitespace().count();
    DraftTriple {
        answer,
        critique,
        follow_up_question: question,
        references: Vec::new(),
        word_count,
        flags: ParseFlags {
            critique_missing,
            question_missing,
            references_missing: false,
            word_limit_ok: word_count <= ANSWER_WORD_LIMIT,
        },
    }
}

/// Finds `1.`/`2.`/`3.` markers in order (each at text start or after
/// whitespace, followed by whitespace) and slices the three sections.
fn numbered_sections(text: &str) -> Option<(String, String, String)> {
    let m1 = find_marker(text, '1', 0)?;
    let m2 = find_marker(text, '2', m1.1)?;
    let m3 = find_marker(text, '3', m2.1)?;
    let answer = text[m1.1..m2.0].trim().to_string();
    let critique = text[m2.1..m3.0].trim().to_string();
    let question = text[m3.1..].trim().to_string();
    Some((answer, critique, question))
}

/// Marker = `<digit>` then `.` or `)` then whitespace, preceded by start of
/// text or whitespace. Returns (marker offset, content offset).
fn find_marker(text: &str, digit: char, from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        if bytes[i] == digit as u8 {
            let at_boundary = i == 0 || (bytes[i - 1] as char).is_whitespace();
            let punct = matches!(bytes.get(i + 1), Some(b'.') | Some(b')'));
            let then_space = bytes
                .get(i + 2)
                .is_some_and(|b| (*b as char).is_whitespace());
            if at_boundary && punct && then_space {
                return Some((i, i + 3));
            }
        }
        i += 1;
    }
    None
}

const ANSWER_KEYWORDS: [&str; 4] = ["revised answer", "initial answer", "draft answer", "answer"];
const CRITIQUE_KEYWORDS: [&str; 4] = ["self-critique", "self critique", "critique", "reflection"];
const QUESTION_KEYWORDS: [&str; 4] = [
    "follow-up question",
    "follow up question",
    "next question",
    "question",
];

#[derive(PartialEq, Clone, Copy)]
enum SectionKind {
    Answer,
    Critique,
    Question,
}

/// Header-based sections: lines like `Answer: ...`, `**Critique**`,
/// `## Question`. Applies only when both an answer and a question header
/// are present.
fn header_sections(text: &str) -> Option<(String, Option<String>, String)> {
    let mut sections: Vec<(SectionKind, String)> = Vec::new();
    for line in text.lines() {
        if let Some((kind, inline)) = match_header(line) {
            sections.push((kind, inline.unwrap_or_default()));
        } else if let Some((_, body)) = sections.last_mut() {
            if !body.is_empty() {
                body.push('\n');
            }
            body.push_str(line);
        }
    }
    let find = |kind: SectionKind| {
        sections
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, body)| body.trim().to_string())
    };
    let answer = find(SectionKind::Answer)?;
    let question = find(SectionKind::Question)?;
    Some((answer, find(SectionKind::Critique), question))
}

fn match_header(line: &str) -> Option<(SectionKind, Option<String>)> {
    let stripped = line
        .trim_start()
        .trim_start_matches(['#', '*', '>', '-'])
        .trim_start();
    let lower = stripped.to_lowercase();
    for (keywords, kind) in [
        (&ANSWER_KEYWORDS, SectionKind::Answer),
        (&CRITIQUE_KEYWORDS, SectionKind::Critique),
        (&QUESTION_KEYWORDS, SectionKind::Question),
    ] {
        for kw in keywords.iter() {
            if let Some(rest) = lower.strip_prefix(kw) {
                let rest_original = &stripped[kw.len()..];
                let rest_trim = rest.trim_start_matches('*').trim_start();
                if rest_trim.starts_with(':') {
                    // Keyword may be wrapped like `**Answer:**` or
                    // `**Answer**:`; shed the decoration on both sides of
                    // the colon.
                    let content = rest_original
                        .trim_start_matches('*')
                        .trim_start()
                        .trim_start_matches(':')
                        .trim_start_matches('*')
                        .trim();
                    return Some((
                        kind,
                        if content.is_empty() {
                            None
                        } else {
                            Some(content.to_string())
                        },
                    ));
                }
                if rest_trim.is_empty() {
                    return Some((kind, None));
                }
            }
        }
    }
    None
}

fn first_paragraph(text: &str) -> String {
    text.trim()
        .split("\n\n")
        .next()
        .unwrap_or_default()
        .trim()
        .to_string()
}

/// Splits at the last line that is a `References` heading (case-insensitive,
/// optional decoration/colon). Returns (content before, parsed references,
/// heading found).
fn split_references(text: &str) -> (String, Vec<Reference>, bool) {
    let lines: Vec<&str> = text.lines().collect();
    let heading_idx = lines.iter().rposition(|l| is_references_heading(l));
    let Some(idx) = heading_idx else {
        return (text.trim_end().to_string(), Vec::new(), false);
    };
    let content = lines[..idx].join("\n").trim_end().to_string();
    let mut references = Vec::new();
    for line in &lines[idx + 1..] {
        if let Some(r) = parse_reference_line(line) {
            references.push(r);
        }
    }
    (content, references, true)
}

fn is_references_heading(line: &str) -> bool {
    let stripped = line
        .trim()
        .trim_start_matches(['#', '*', '>'])
        .trim()
        .trim_end_matches(['*', ':'])
        .trim();
    stripped.eq_ignore_ascii_case("references")
}

/// Reference lines look like `- [n] text` or `[n] text`.
fn parse_reference_line(line: &str) -> Option<Reference> {
    let trimmed = line.trim().trim_start_matches(['-', '*']).trim_start();
    let rest = trimmed.strip_prefix('[')?;
    let close = rest.find(']')?;
    let index: u32 = rest[..close].trim().parse().ok()?;
    let text = rest[close + 1..].trim().to_string();
    Some(Reference { index, text })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_last_question() {
        assert_eq!(extract_question("A? Then B? ").unwrap(), "Then B?");
    }

    #[test]
    fn extract_no_question() {
        assert_eq!(
            extract_question("no questions here."),
            Err(ParseError::NoQuestionFound)
        );
    }

    #[test]
    fn extract_applies_to_last_occurrence() {
        let text = "Earlier someone asked \"how many?\" in the transcript.\nFinal check done. Is the runway lit?";
        assert_eq!(extract_question(text).unwrap(), "Is the runway lit?");
    }

    #[test]
    fn extract_across_newline_boundary() {
        assert_eq!(
            extract_question("line one\nIs it a port?").unwrap(),
            "Is it a port?"
        );
    }

    #[test]
    fn draft_numbered_sections() {
        let text = "1. The airport has two runways. 2. I may have missed taxiways. 3. How many taxiways are visible?";
        let t = parse_draft(text).unwrap();
        assert_eq!(t.answer, "The airport has two runways.");
        assert_eq!(t.critique, "I may have missed taxiways.");
        assert_eq!(t.follow_up_question, "How many taxiways are visible?");
        assert_eq!(t.word_count, 5);
        assert!(!t.flags.critique_missing);
    }

    #[test]
    fn draft_unstructured_prose_falls_back() {
        let text = "The scene shows a large building beside the apron.\n\nMore context follows here. Is the large building a terminal?";
        let t = parse_draft(text).unwrap();
        assert_eq!(t.answer, "The scene shows a large building beside the apron.");
        assert_eq!(t.follow_up_question, "Is the large building a terminal?");
        assert!(t.flags.critique_missing);
        assert_eq!(t.critique, "");
    }

    #[test]
    fn draft_without_question_errors() {
        let text = "1. Two runways. 2. Might be wrong. 3. Count the taxiways.";
        assert_eq!(parse_draft(text), Err(ParseError::NoQuestionFound));
    }

    #[test]
    fn draft_header_sections() {
        let text = "**Answer:** Two runways are visible.\n**Critique:** The smaller strip may be a taxiway.\n**Question:** Is the southern strip a runway?";
        let t = parse_draft(text).unwrap();
        assert_eq!(t.answer, "Two runways are visible.");
        assert_eq!(t.critique, "The smaller strip may be a taxiway.");
        assert_eq!(t.follow_up_question, "Is the southern strip a runway?");
    }

    #[test]
    fn draft_block_headers() {
        let text = "## Answer\nTwo runways.\n## Critique\nUnsure about the apron.\n## Question\nHow long is the main runway?";
        let t = parse_draft(text).unwrap();
        assert_eq!(t.answer, "Two runways.");
        assert_eq!(t.critique, "Unsure about the apron.");
        assert_eq!(t.follow_up_question, "How long is the main runway?");
    }

    #[test]
    fn revision_with_references() {
        let text = "1. The airport has two runways [1], and no aircraft are present [2]. 2. Covered the aprons now. 3. Are any service vehicles visible?\n\nReferences:\n- [1] two runways visible\n- [2] no aircraft present";
        let t = parse_revision(text);
        assert_eq!(
            t.references,
            vec![
                Reference { index: 1, text: "two runways visible".into() },
                Reference { index: 2, text: "no aircraft present".into() },
            ]
        );
        assert!(!t.flags.references_missing);
        assert_eq!(t.follow_up_question, "Are any service vehicles visible?");
        assert!(t.flags.word_limit_ok);
    }

    #[test]
    fn revision_over_word_limit_flagged() {
        let answer: String = (0..62).map(|i| format!("w{i} ")).collect();
        let text = format!("1. {answer}2. fine. 3. More to check?\n\nReferences:\n- [1] x");
        let t = parse_revision(&text);
        assert_eq!(t.word_count, 62);
        assert!(!t.flags.word_limit_ok);
    }

    #[test]
    fn revision_without_references_flagged() {
        let t = parse_revision("1. a. 2. b. 3. c?");
        assert!(t.references.is_empty());
        assert!(t.flags.references_missing);
    }

    #[test]
    fn revision_is_total_on_garbage() {
        let t = parse_revision("%%%%");
        assert_eq!(t.answer, "%%%%");
        assert!(t.flags.question_missing);
        let t = parse_revision("");
        assert_eq!(t.answer, "");
    }

    #[test]
    fn revision_bare_reference_lines() {
        let text = "answer here. next question?\nREFERENCES\n[1] first\n[2] second";
        let t = parse_revision(text);
        assert_eq!(t.references.len(), 2);
        assert_eq!(t.references[1].text, "second");
    }

    #[test]
    fn judge_verdict_parsing() {
        assert_eq!(parse_judge_verdict("1").unwrap(), Verdict::Match);
        assert_eq!(parse_judge_verdict("0").unwrap(), Verdict::NoMatch);
        assert_eq!(
            parse_judge_verdict("The prediction matches the ground truth. 1").unwrap(),
            Verdict::Match
        );
        assert_eq!(
            parse_judge_verdict("maybe"),
            Err(ParseError::UnparseableVerdict)
        );
        // "10" is adjacent digits, not a standalone token.
        assert_eq!(
            parse_judge_verdict("10 things considered... 0").unwrap(),
            Verdict::NoMatch
        );
    }

    #[test]
    fn word_count_rules() {
        assert_eq!(count_words("two runways visible"), 3);
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("a  b\nc"), 3);
        assert_eq!(
            count_words("four words in answer\nReferences:\n- [1] not counted here"),
            4
        );
    }

    #[test]
    fn canonical_round_trip() {
        let original = parse_revision(
            "1. Two runways [1]. 2. Missed the tower. 3. Is a control tower present?\n\nReferences:\n- [1] two parallel strips",
        );
        let reparsed = parse_revision(&original.to_numbered_text());
        assert_eq!(original, reparsed);
    }
}
