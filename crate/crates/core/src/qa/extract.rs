use serde::{Deserialize, Serialize};

use super::{fill_prompt, QaError, EXTRACTOR_PROMPT};
use crate::answerer::{ChatClient, Message, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_bool(self) -> bool {
        self == Polarity::Positive
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Rule,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryAnswer {
    pub value: Polarity,
    pub source: Source,
}

const AFFIRM: &[&[&str]] = &[&["yes"], &["it", "holds"], &["correct"], &["true"]];
const NEGATE: &[&[&str]] = &[
    &["no"],
    &["it", "does", "not", "hold"],
    &["incorrect"],
    &["false"],
    &["not"],
];

/// Lowercase word tokens. Contractions ending in "n't" and "cannot" are
/// split so that their "not" is visible.
fn tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase().replace('\u{2019}', "'");
    let mut out = Vec::new();
    for raw in lower.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
        let w = raw.trim_matches('\'');
        if w.is_empty() {
            continue;
        }
        if let Some(stem) = w.strip_suffix("n't") {
            if !stem.is_empty() {
                out.push(stem.to_string());
            }
            out.push("not".into());
        } else if w == "cannot" {
            out.push("can".into());
            out.push("not".into());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

fn contains(tokens: &[String], lexicon: &[&[&str]]) -> bool {
    lexicon.iter().any(|phrase| {
        tokens
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase.iter()).all(|(a, b)| a == b))
    })
}

/// Rule-based extractor h. A leading "yes"/"no" decides; otherwise the
/// answer is positive when only affirmations occur, negative when only
/// negations occur, and undecidable (`None`) when both or neither do.
pub fn extract_rule(answer: &str) -> Option<BinaryAnswer> {
    let toks = tokens(answer);
    let decided = |v| {
        Some(BinaryAnswer {
            value: v,
            source: Source::Rule,
        })
    };
    match toks.first().map(String::as_str) {
        Some("yes") => return decided(Polarity::Positive),
        Some("no") => return decided(Polarity::Negative),
        _ => {}
    }
    match (contains(&toks, AFFIRM), contains(&toks, NEGATE)) {
        (true, false) => decided(Polarity::Positive),
        (false, true) => decided(Polarity::Negative),
        _ => None,
    }
}

/// Maps a verdict reply to a polarity; surrounding quotes, whitespace and
/// final punctuation are ignored.
pub fn parse_verdict(reply: &str) -> Result<Polarity, QaError> {
    let t = reply
        .trim()
        .trim_matches(|c: char| matches!(c, '\'' | '"' | '`' | '.' | ' '))
        .to_ascii_uppercase();
    match t.as_str() {
        "POSITIVE" => Ok(Polarity::Positive),
        "NEGATIVE" => Ok(Polarity::Negative),
        _ => Err(QaError::Extraction(format!("unexpected verdict {reply:?}"))),
    }
}

/// Model-based extractor h using the extractor prompt.
pub fn extract_remote(
    answer: &str,
    question: &str,
    client: &dyn ChatClient,
) -> Result<BinaryAnswer, QaError> {
    let prompt = fill_prompt(EXTRACTOR_PROMPT, &[("q", question), ("a", answer)]);
    let sampling = Sampling {
        temperature: 0.0,
        max_tokens: 4,
    };
    let reply = client.complete(&[Message::user(prompt)], &sampling)?;
    Ok(BinaryAnswer {
        value: parse_verdict(&reply)?,
        source: Source::Remote,
    })
}
