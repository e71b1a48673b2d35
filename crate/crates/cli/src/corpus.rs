//! Corpus records and their JSON-Lines serialization, plus the summary
//! statistics reported by `stats`.
//!
//! A corpus file holds one sample per line in stable key order, so large
//! corpora can be streamed and diffed line by line.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use flowforge_core::metrics::{complexity, ComplexityStats};
use flowforge_core::registry::{ApiDoc, ApiRegistry};
use flowforge_core::wfdsl;

/// One training instance: query, API list, plan, and commented code.
/// Fields may be empty while the sample moves through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSample {
    pub id: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub api_docs: Vec<String>,
    #[serde(default)]
    pub plan: String,
    #[serde(default)]
    pub code: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub validated: bool,
}

impl WorkflowSample {
    pub fn new(id: &str) -> Self {
        WorkflowSample {
            id: id.to_string(),
            category: String::new(),
            query: String::new(),
            api_docs: Vec::new(),
            plan: String::new(),
            code: String::new(),
            validated: false,
        }
    }
}

/// Fully annotated example shipped with the binary, used as the in-context
/// fallback when no corpus is available yet.
pub const SEED_SAMPLE_JSON: &str = include_str!("../resources/seed_sample.json");

pub fn seed_sample() -> WorkflowSample {
    serde_json::from_str(SEED_SAMPLE_JSON).expect("embedded seed sample is valid")
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: bad sample record: {message}")]
    BadRecord { path: String, line: usize, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn read_corpus(path: &Path) -> Result<Vec<WorkflowSample>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(line).map_err(|e| CorpusError::BadRecord {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn sample_line(sample: &WorkflowSample) -> String {
    let mut line = serde_json::to_string(sample).expect("sample serializes");
    line.push('\n');
    line
}

pub fn corpus_to_string(samples: &[WorkflowSample]) -> String {
    samples.iter().map(sample_line).collect()
}

pub fn write_corpus(path: &Path, samples: &[WorkflowSample]) -> Result<(), CorpusError> {
    std::fs::write(path, corpus_to_string(samples)).map_err(|e| io_err(path, e))
}

/// Whole-file read of a single sample (a one-line corpus is also a plain
/// JSON document, so both spellings work).
pub fn read_sample(path: &Path) -> Result<WorkflowSample, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(text.trim()).map_err(|e| CorpusError::BadRecord {
        path: path.display().to_string(),
        line: 1,
        message: e.to_string(),
    })
}

/// Corpus-level summary. Averages are arithmetic means over the samples
/// whose code parses; the rest are counted in `n_unparseable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_instances: usize,
    pub n_apps: usize,
    pub n_apis: usize,
    pub n_categories: usize,
    pub avg_action: f64,
    pub avg_if: f64,
    pub avg_loop: f64,
    pub avg_nested_depth: f64,
    pub n_unparseable: usize,
}

/// With a registry the owning app of each referenced API is exact; without
/// one it is approximated by dropping the last dotted segment of the id.
pub fn compute_stats(samples: &[WorkflowSample], registry: Option<&ApiRegistry>) -> CorpusStats {
    let mut apis: BTreeSet<&str> = BTreeSet::new();
    let mut apps: BTreeSet<String> = BTreeSet::new();
    let mut categories: BTreeSet<&str> = BTreeSet::new();
    let mut totals = ComplexityStats::default();
    let mut parseable = 0usize;
    let mut unparseable = 0usize;

    for sample in samples {
        for id in &sample.api_docs {
            apis.insert(id);
            let app = registry
                .and_then(|r| r.get(id))
                .map(|d| d.app_id.clone())
                .unwrap_or_else(|| id.rsplit_once('.').map(|(a, _)| a).unwrap_or(id).to_string());
            apps.insert(app);
        }
        if !sample.category.is_empty() {
            categories.insert(&sample.category);
        }
        match wfdsl::parse(&sample.code) {
            Ok(program) => {
                let c = complexity(&program);
                totals.n_actions += c.n_actions;
                totals.n_if += c.n_if;
                totals.n_loop += c.n_loop;
                totals.nested_depth += c.nested_depth;
                parseable += 1;
            }
            Err(_) => unparseable += 1,
        }
    }

    let avg = |total: usize| if parseable == 0 { 0.0 } else { total as f64 / parseable as f64 };
    CorpusStats {
        n_instances: samples.len(),
        n_apps: apps.len(),
        n_apis: apis.len(),
        n_categories: categories.len(),
        avg_action: avg(totals.n_actions),
        avg_if: avg(totals.n_if),
        avg_loop: avg(totals.n_loop),
        avg_nested_depth: avg(totals.nested_depth),
        n_unparseable: unparseable,
    }
}

/// Python-style signature plus docstring, the shape prompts embed.
pub fn format_api_doc(doc: &ApiDoc) -> String {
    let mut params = Vec::new();
    for p in &doc.params {
        let mut part = format!("{}: {}", p.name, p.param_type);
        match &p.default {
            Some(v) => {
                part.push_str(" = ");
                part.push_str(&py_literal(v));
            }
            None if !p.required => part.push_str(" = None"),
            None => {}
        }
        params.push(part);
    }
    let ret = match &doc.return_type {
        Some(t) => format!(" -> {t}"),
        None => String::new(),
    };
    let mut docstring = doc.description.clone();
    if let Some(name) = &doc.return_name {
        docstring.push_str(&format!(" Returns: {name}."));
    }
    format!(
        "def {}({}){}:\n    \"\"\"{}\"\"\"",
        doc.function_name(),
        params.join(", "),
        ret,
        docstring
    )
}

pub fn format_api_docs(docs: &[ApiDoc]) -> String {
    docs.iter().map(format_api_doc).collect::<Vec<_>>().join("\n\n")
}

fn py_literal(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => {
            format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
        }
        serde_json::Value::Bool(true) => "True".to_string(),
        serde_json::Value::Bool(false) => "False".to_string(),
        serde_json::Value::Null => "None".to_string(),
        other => other.to_string(),
    }
}
