//! Code similarity scoring and corpus complexity statistics.
//!
//! The composite score combines four components: token n-gram overlap,
//! keyword-weighted n-gram overlap, subtree overlap, and dataflow-edge
//! overlap. Token components always compute, even for malformed code;
//! structural components require a parse and default to zero when the
//! candidate (or reference) does not parse, with a flag recording why.

pub mod ngram;
pub mod structure;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wfdsl::{self, DslExpr, DslProgram, DslStmt, DslStmtKind};

pub use ngram::{bleu, tokens, weighted_ngram, weighted_ngram_with, DEFAULT_KEYWORD_WEIGHT};
pub use structure::{ast_match, ast_match_with, dataflow_match, AstMatchMode};

/// Component weights: bleu, weighted n-gram, subtree, dataflow.
pub const DEFAULT_WEIGHTS: [f64; 4] = [0.1, 0.1, 0.4, 0.4];
/// Weights passed to [`codebleu_with`] must sum to 1 within this bound.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid metric configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Arg(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub weighted_ngram: f64,
    pub ast_match: f64,
    pub dataflow_match: f64,
    pub codebleu: f64,
    pub weights: [f64; 4],
    #[serde(default)]
    pub candidate_parse_failed: bool,
    #[serde(default)]
    pub reference_parse_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComplexityStats {
    /// Statements whose right-hand side is a call; nested calls inside
    /// arguments or f-strings do not count.
    pub n_actions: usize,
    /// If headers plus one per elif arm; else arms do not count.
    pub n_if: usize,
    pub n_loop: usize,
    /// Deepest block nesting of any statement; top level is 0. Menu cases
    /// nest their bodies like any other block.
    pub nested_depth: usize,
}

pub fn codebleu(candidate: &str, reference: &str) -> Result<MetricReport, MetricError> {
    codebleu_with(candidate, reference, DEFAULT_WEIGHTS)
}

pub fn codebleu_with(
    candidate: &str,
    reference: &str,
    weights: [f64; 4],
) -> Result<MetricReport, MetricError> {
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(MetricError::Config(format!(
            "component weights must sum to 1, got {sum}"
        )));
    }
    let cand_tokens = ngram::tokens(candidate);
    let ref_tokens = ngram::tokens(reference);
    let bleu = ngram::bleu(&cand_tokens, &ref_tokens);
    let weighted = ngram::weighted_ngram(&cand_tokens, &ref_tokens);
    let cand_parsed = wfdsl::parse(candidate).ok();
    let ref_parsed = wfdsl::parse(reference).ok();
    let (ast, dataflow) = match (&cand_parsed, &ref_parsed) {
        (Some(c), Some(r)) => (structure::ast_match(c, r), structure::dataflow_match(c, r)),
        _ => (0.0, 0.0),
    };
    let score =
        weights[0] * bleu + weights[1] * weighted + weights[2] * ast + weights[3] * dataflow;
    Ok(MetricReport {
        bleu,
        weighted_ngram: weighted,
        ast_match: ast,
        dataflow_match: dataflow,
        codebleu: score,
        weights,
        candidate_parse_failed: cand_parsed.is_none(),
        reference_parse_failed: ref_parsed.is_none(),
    })
}

pub fn complexity(p: &DslProgram) -> ComplexityStats {
    let mut stats = ComplexityStats::default();
    visit_stmts(&p.statements, 0, &mut stats);
    stats
}

fn visit_stmts(stmts: &[DslStmt], depth: usize, stats: &mut ComplexityStats) {
    for stmt in stmts {
        visit_stmt(stmt, depth, stats);
    }
}

fn visit_stmt(stmt: &DslStmt, depth: usize, stats: &mut ComplexityStats) {
    stats.nested_depth = stats.nested_depth.max(depth);
    match &stmt.kind {
        DslStmtKind::Assign { expr, .. } | DslStmtKind::ExprStmt(expr) => {
            if matches!(expr, DslExpr::Call { .. }) {
                stats.n_actions += 1;
            }
        }
        DslStmtKind::If { body, elifs, else_body, .. } => {
            stats.n_if += 1 + elifs.len();
            visit_stmts(body, depth + 1, stats);
            for (_, arm) in elifs {
                visit_stmts(arm, depth + 1, stats);
            }
            if let Some(arm) = else_body {
                visit_stmts(arm, depth + 1, stats);
            }
        }
        DslStmtKind::ForIn { body, .. } | DslStmtKind::While { body, .. } => {
            stats.n_loop += 1;
            visit_stmts(body, depth + 1, stats);
        }
        DslStmtKind::Match { cases, .. } => {
            for case in cases {
                visit_stmts(&case.body, depth + 1, stats);
            }
        }
        DslStmtKind::Pass | DslStmtKind::Comment(_) => {}
    }
}

/// Fraction of positions where the two label vectors agree.
pub fn agreement_rate(labels_a: &[bool], labels_b: &[bool]) -> Result<f64, MetricError> {
    if labels_a.len() != labels_b.len() {
        return Err(MetricError::Arg(format!(
            "label vectors differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(MetricError::Arg("label vectors are empty".to_string()));
    }
    let matches = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / labels_a.len() as f64)
}
