//! Parsers for the structured answers the prompts elicit. Models are
//! inconsistent about fencing and add free-form prose, so every parser
//! scans rather than assuming a clean payload.

use std::collections::BTreeMap;

use flowforge_core::naming::sanitize_identifier;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// The full response; the interpretation text is worth keeping.
    pub rationale: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("response contains no standalone true or false token")]
pub struct VerdictParseError;

/// First standalone `true` or `false`, ASCII case-insensitive, decides.
/// Standalone means not flanked by identifier characters, so "untrue" and
/// "false_positive" do not count.
pub fn parse_verdict(response: &str) -> Result<Verdict, VerdictParseError> {
    let lower = response.to_ascii_lowercase();
    let mut earliest: Option<(usize, bool)> = None;
    for (needle, value) in [("true", true), ("false", false)] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(needle) {
            let at = from + pos;
            if standalone(lower.as_bytes(), at, needle.len()) {
                if earliest.is_none_or(|(best, _)| at < best) {
                    earliest = Some((at, value));
                }
                break;
            }
            from = at + 1;
        }
    }
    match earliest {
        Some((_, pass)) => Ok(Verdict { pass, rationale: response.to_string() }),
        None => Err(VerdictParseError),
    }
}

fn standalone(bytes: &[u8], start: usize, len: usize) -> bool {
    let word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let before_ok = start == 0 || !word(bytes[start - 1]);
    let after_ok = start + len == bytes.len() || !word(bytes[start + len]);
    before_ok && after_ok
}

/// Locate the JSON object in a response: a ```json fence wins, then any
/// fence, then the first balanced brace span that parses. Fenced content is
/// authoritative; if a model fences garbage the error should say so rather
/// than a scan digging up some other brace pair.
pub fn extract_json(response: &str) -> Option<&str> {
    if let Some(block) = fenced_block(response, Some("json")) {
        return Some(block);
    }
    if let Some(block) = fenced_block(response, None) {
        return Some(block);
    }
    balanced_object(response)
}

fn fenced_block<'a>(text: &'a str, tag: Option<&str>) -> Option<&'a str> {
    let mut offset = 0;
    let mut open: Option<usize> = None;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("```") {
            match open {
                None => {
                    let line_tag = rest.trim().to_ascii_lowercase();
                    if tag.is_none_or(|t| line_tag == t) {
                        open = Some(offset + line.len());
                    }
                }
                Some(start) => return Some(&text[start..offset]),
            }
        }
        offset += line.len();
    }
    // An unclosed fence runs to the end of the response.
    open.map(|start| &text[start..])
}

fn balanced_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    for start in 0..bytes.len() {
        if bytes[start] != b'{' {
            continue;
        }
        if let Some(end) = balanced_end(bytes, start) {
            let span = &text[start..end];
            if serde_json::from_str::<serde::de::IgnoredAny>(span).is_ok() {
                return Some(span);
            }
        }
    }
    None
}

fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommentMap {
    /// Line number to description, from the "line N" keys.
    pub comments: BTreeMap<usize, String>,
    /// Requested lines the response failed to cover.
    pub missing: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommentParseError {
    #[error("response contains no JSON object")]
    NoJson,
    #[error("comment payload is not an object of line descriptions: {0}")]
    BadShape(String),
}

pub fn parse_comment_map(
    response: &str,
    expected_lines: &[usize],
) -> Result<CommentMap, CommentParseError> {
    let raw = extract_json(response).ok_or(CommentParseError::NoJson)?;
    let value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| CommentParseError::BadShape(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| CommentParseError::BadShape("top level is not an object".to_string()))?;
    let mut comments = BTreeMap::new();
    for (key, val) in object {
        let Some(line) = key.strip_prefix("line ").and_then(|n| n.trim().parse::<usize>().ok())
        else {
            // Filler keys like "..." from the answer skeleton are dropped.
            continue;
        };
        let text = val.as_str().ok_or_else(|| {
            CommentParseError::BadShape(format!("value for {key:?} is not a string"))
        })?;
        comments.insert(line, text.to_string());
    }
    let missing =
        expected_lines.iter().copied().filter(|n| !comments.contains_key(n)).collect();
    Ok(CommentMap { comments, missing })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenameParseError {
    #[error("response contains no JSON object")]
    NoJson,
    #[error("rename payload is not an object of strings: {0}")]
    BadShape(String),
}

/// Old name to proposed name. Proposals pass through the identifier
/// sanitizer, so a model answering "my workflows" still yields usable code.
pub fn parse_rename_map(response: &str) -> Result<BTreeMap<String, String>, RenameParseError> {
    let raw = extract_json(response).ok_or(RenameParseError::NoJson)?;
    let value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| RenameParseError::BadShape(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| RenameParseError::BadShape("top level is not an object".to_string()))?;
    let mut map = BTreeMap::new();
    for (old, new) in object {
        let new = new.as_str().ok_or_else(|| {
            RenameParseError::BadShape(format!("value for {old:?} is not a string"))
        })?;
        map.insert(old.clone(), sanitize_identifier(new));
    }
    Ok(map)
}
