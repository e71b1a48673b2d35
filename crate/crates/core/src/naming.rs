//! Variable name assignment for action outputs referenced elsewhere in the
//! workflow. Deterministic mode yields var_1, var_2, ... in pre-order;
//! external mode takes caller-provided names, sanitized and deduplicated.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{AstNode, WorkflowAst};
use crate::ingest::{Attachment, ParamValue};

/// Words with structural meaning in the emitted code. A variable carrying one
/// of these would change how the line parses.
pub const RESERVED_WORDS: &[&str] = &[
    "if", "elif", "else", "for", "while", "in", "not", "and", "or", "match", "case", "pass",
    "True", "False", "None",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamingStyle {
    Deterministic,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamingPlan {
    names: BTreeMap<String, String>,
    pub style: NamingStyle,
}

impl NamingPlan {
    pub fn empty() -> Self {
        NamingPlan { names: BTreeMap::new(), style: NamingStyle::Deterministic }
    }

    pub fn name_for(&self, uuid: &str) -> Option<&str> {
        self.names.get(uuid).map(String::as_str)
    }

    pub fn names(&self) -> &BTreeMap<String, String> {
        &self.names
    }
}

/// Name every node whose output uuid is referenced by an attachment anywhere
/// in the tree. With `external` given, each referenced uuid takes its mapped
/// name (sanitized, deduplicated with numeric suffixes); uuids the map misses
/// fall back to their deterministic name.
pub fn assign_names(
    ast: &WorkflowAst,
    external: Option<&BTreeMap<String, String>>,
) -> NamingPlan {
    let referenced = collect_referenced_uuids(ast);

    let mut order = Vec::new();
    collect_named_nodes(&ast.root, &referenced, &mut order);

    let style = if external.is_some() { NamingStyle::External } else { NamingStyle::Deterministic };
    let mut names = BTreeMap::new();
    let mut taken = BTreeSet::new();
    for (ordinal, uuid) in order.iter().enumerate() {
        let base = match external.and_then(|m| m.get(uuid)) {
            Some(raw) => sanitize_identifier(raw),
            None => format!("var_{}", ordinal + 1),
        };
        let name = dedup(&base, &mut taken);
        names.insert(uuid.clone(), name);
    }
    NamingPlan { names, style }
}

fn collect_referenced_uuids(ast: &WorkflowAst) -> BTreeSet<String> {
    fn walk_value(value: &ParamValue, out: &mut BTreeSet<String>) {
        match value {
            ParamValue::Attachment(Attachment::ActionOutput { output_uuid, .. }) => {
                out.insert(output_uuid.clone());
            }
            ParamValue::List(items) => items.iter().for_each(|v| walk_value(v, out)),
            ParamValue::Map(entries) => entries.values().for_each(|v| walk_value(v, out)),
            _ => {}
        }
    }
    fn walk_node(node: &AstNode, out: &mut BTreeSet<String>) {
        if let Some(action) = &node.action {
            action.params.values().for_each(|v| walk_value(v, out));
        }
        node.children.iter().for_each(|c| walk_node(c, out));
    }
    let mut out = BTreeSet::new();
    walk_node(&ast.root, &mut out);
    out
}

fn collect_named_nodes(node: &AstNode, referenced: &BTreeSet<String>, out: &mut Vec<String>) {
    if let Some(uuid) = node.action.as_ref().and_then(|a| a.uuid.as_deref()) {
        if referenced.contains(uuid) && !out.iter().any(|u| u == uuid) {
            out.push(uuid.to_string());
        }
    }
    for child in &node.children {
        collect_named_nodes(child, referenced, out);
    }
}

fn dedup(base: &str, taken: &mut BTreeSet<String>) -> String {
    if taken.insert(base.to_string()) {
        return base.to_string();
    }
    let mut n = 2;
    loop {
        let candidate = format!("{base}_{n}");
        if taken.insert(candidate.clone()) {
            return candidate;
        }
        n += 1;
    }
}

/// Coerce arbitrary text into a valid code identifier: invalid characters
/// become underscores, a leading digit gains an underscore prefix, reserved
/// words gain an underscore suffix, and empty input becomes `v`.
pub fn sanitize_identifier(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        } else {
            out.push('_');
        }
    }
    if out.is_empty() {
        return "v".to_string();
    }
    if out.as_bytes()[0].is_ascii_digit() {
        out.insert(0, '_');
    }
    if RESERVED_WORDS.contains(&out.as_str()) {
        out.push('_');
    }
    out
}
