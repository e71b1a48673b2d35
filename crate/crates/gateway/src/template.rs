//! The eight pipeline prompts, embedded verbatim, and placeholder filling.
//!
//! A placeholder is `{name}` where name is an identifier. Anything else
//! involving braces is literal text; several templates contain JSON
//! skeletons whose braces must survive rendering untouched.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateName {
    /// Write workflow code for a query given API interfaces.
    Orchestration,
    /// Review generated code against a query and allowed APIs.
    Evaluator,
    /// Describe each line of a code snippet.
    Comment,
    /// Summarize line comments into a natural-language flowchart.
    Plan,
    /// Write a user query matching existing code.
    Query,
    /// Invent a fresh query from sampled API docs.
    Expansion,
    /// Polish a plan/code pair.
    Refine,
    /// Propose semantic names for placeholder variables.
    Rename,
}

impl TemplateName {
    pub const ALL: [TemplateName; 8] = [
        TemplateName::Orchestration,
        TemplateName::Evaluator,
        TemplateName::Comment,
        TemplateName::Plan,
        TemplateName::Query,
        TemplateName::Expansion,
        TemplateName::Refine,
        TemplateName::Rename,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Orchestration => "orchestration",
            TemplateName::Evaluator => "evaluator",
            TemplateName::Comment => "comment",
            TemplateName::Plan => "plan",
            TemplateName::Query => "query",
            TemplateName::Expansion => "expansion",
            TemplateName::Refine => "refine",
            TemplateName::Rename => "rename",
        }
    }
}

impl std::str::FromStr for TemplateName {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unfilled placeholder: {0}")]
    MissingPlaceholder(String),
    #[error("unknown template: {0}")]
    UnknownName(String),
}

pub fn template(name: TemplateName) -> PromptTemplate {
    let body = match name {
        TemplateName::Orchestration => include_str!("../resources/orchestration.txt"),
        TemplateName::Evaluator => include_str!("../resources/evaluator.txt"),
        TemplateName::Comment => include_str!("../resources/comment.txt"),
        TemplateName::Plan => include_str!("../resources/plan.txt"),
        TemplateName::Query => include_str!("../resources/query.txt"),
        TemplateName::Expansion => include_str!("../resources/expansion.txt"),
        TemplateName::Refine => include_str!("../resources/refine.txt"),
        TemplateName::Rename => include_str!("../resources/rename.txt"),
    };
    PromptTemplate { name, body }
}

/// `{name}` at the start of `s`; returns the name and the span length.
fn leading_placeholder(s: &str) -> Option<(&str, usize)> {
    let inner = s.strip_prefix('{')?;
    let bytes = inner.as_bytes();
    if bytes.is_empty() || !(bytes[0].is_ascii_alphabetic() || bytes[0] == b'_') {
        return None;
    }
    let mut end = 1;
    while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
        end += 1;
    }
    if bytes.get(end) == Some(&b'}') {
        Some((&inner[..end], end + 2))
    } else {
        None
    }
}

/// Placeholder names in order of first appearance.
pub fn placeholders(body: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = body;
    while let Some(pos) = rest.find('{') {
        rest = &rest[pos..];
        if let Some((name, len)) = leading_placeholder(rest) {
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &rest[len..];
        } else {
            rest = &rest[1..];
        }
    }
    out
}

/// Substitute every placeholder from `bindings`. Values go in verbatim and
/// are not re-scanned, so code containing braces passes through intact.
pub fn render(t: &PromptTemplate, bindings: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(t.body.len());
    let mut rest = t.body;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        if let Some((name, len)) = leading_placeholder(rest) {
            match bindings.get(name) {
                Some(value) => out.push_str(value),
                None => return Err(TemplateError::MissingPlaceholder(name.to_string())),
            }
            rest = &rest[len..];
        } else {
            out.push('{');
            rest = &rest[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bound<'a>(pairs: &[(&'a str, &'a str)]) -> BTreeMap<&'a str, &'a str> {
        pairs.iter().copied().collect()
    }

    /// Each template's placeholder set, fixed by the embedded text.
    const EXPECTED: [(TemplateName, &[&str]); 8] = [
        (TemplateName::Orchestration, &["query", "apis_docs"]),
        (TemplateName::Evaluator, &["query", "apis", "code"]),
        (TemplateName::Comment, &["code", "lines"]),
        (TemplateName::Plan, &["code"]),
        (TemplateName::Query, &["ICL_code", "ICL_query", "code"]),
        (TemplateName::Expansion, &["examples", "apis_string", "category"]),
        (TemplateName::Refine, &["query", "thought", "code", "apis", "ICL_context"]),
        (TemplateName::Rename, &["code", "description", "variables"]),
    ];

    #[test]
    fn placeholder_inventory_is_exact() {
        for (name, want) in EXPECTED {
            let t = template(name);
            assert_eq!(placeholders(t.body), want, "{}", name.as_str());
        }
    }

    #[test]
    fn rendered_text_matches_template_outside_placeholders() {
        // Independent reconstruction with std replace; sentinel values are
        // brace-free so the two substitution orders cannot interfere.
        for (name, names) in EXPECTED {
            let t = template(name);
            let mut expected = t.body.to_string();
            let mut bindings = BTreeMap::new();
            let sentinels: Vec<(String, String)> = names
                .iter()
                .map(|n| (format!("{{{n}}}"), format!("<<{n}>>")))
                .collect();
            for ((pattern, sentinel), n) in sentinels.iter().zip(names) {
                expected = expected.replace(pattern, sentinel);
                bindings.insert(*n, sentinel.as_str());
            }
            let got = render(&t, &bindings).unwrap();
            assert_eq!(got, expected, "{}", name.as_str());
            assert!(placeholders(&got).is_empty(), "{}", name.as_str());
        }
    }

    #[test]
    fn evaluator_renders_with_its_opening_line() {
        let t = template(TemplateName::Evaluator);
        let out =
            render(&t, &bound(&[("query", "q"), ("apis", "a"), ("code", "c")])).unwrap();
        assert!(out.starts_with("You are a kindly code reviewer"));
        assert!(out.contains("query:q"));
        assert!(out.contains("Your answer: [True or False with interpretation]"));
    }

    #[test]
    fn expansion_centers_on_the_category() {
        let t = template(TemplateName::Expansion);
        let out = render(
            &t,
            &bound(&[("examples", "e"), ("apis_string", "docs"), ("category", "Health & Fitness")]),
        )
        .unwrap();
        assert!(out.contains("centered around Health & Fitness theme"));
        assert!(out.contains("Api docs for inspiration:\n```python\ndocs\n```"));
    }

    #[test]
    fn missing_binding_names_the_placeholder() {
        let t = template(TemplateName::Rename);
        let err = render(&t, &bound(&[("code", "c"), ("description", "d")])).unwrap_err();
        assert_eq!(err, TemplateError::MissingPlaceholder("variables".to_string()));
    }

    #[test]
    fn json_skeleton_braces_are_literal() {
        let t = template(TemplateName::Comment);
        let out = render(&t, &bound(&[("code", "pass"), ("lines", "[1]")])).unwrap();
        assert!(out.contains("\"line x\": \"<description-of-line-x>\""));
        assert!(out.contains("```json\n{\n"));
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = template(TemplateName::Plan);
        let out = render(&t, &bound(&[("code", "x = f'{i}'\nprint({code})")])).unwrap();
        assert!(out.contains("x = f'{i}'"));
        assert!(out.contains("print({code})"));
    }

    #[test]
    fn orchestration_keeps_its_output_contract_text() {
        let t = template(TemplateName::Orchestration);
        let out = render(&t, &bound(&[("query", "q"), ("apis_docs", "d")])).unwrap();
        assert!(out.contains("Note that your output should always include `Code:"));
        assert!(out.contains("```python"));
    }

    #[test]
    fn name_round_trips_through_strings() {
        for name in TemplateName::ALL {
            assert_eq!(name.as_str().parse::<TemplateName>().unwrap(), name);
        }
        assert!(matches!(
            "nonsense".parse::<TemplateName>(),
            Err(TemplateError::UnknownName(_))
        ));
    }
}
