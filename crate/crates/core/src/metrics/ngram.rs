//! Token-level n-gram scores over the shared lexer's token stream.

use std::collections::BTreeMap;

use crate::wfdsl::{lex_lenient, TokenKind};

pub const MAX_N: usize = 4;
pub const DEFAULT_KEYWORD_WEIGHT: f64 = 5.0;
const EPSILON: f64 = 1e-9;

/// Tokens that carry control structure; they weigh more in the weighted
/// n-gram score.
pub const KEYWORDS: &[&str] = &[
    "if", "else", "elif", "for", "while", "in", "match", "case", "pass", "range", "input",
    "print", "and", "or", "not",
];

/// Metric tokenization: lenient lexing so malformed code still scores,
/// comments dropped, runs of newlines collapsed, indentation kept as
/// `<indent>`/`<dedent>` markers.
pub fn tokens(code: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for token in lex_lenient(code) {
        match &token.kind {
            TokenKind::Comment(_) | TokenKind::Eof => {}
            TokenKind::Newline => {
                if matches!(out.last(), Some(prev) if prev == "<newline>") || out.is_empty() {
                    continue;
                }
                out.push("<newline>".to_string());
            }
            _ => out.push(token.text().to_string()),
        }
    }
    out
}

pub fn bleu(candidate: &[String], reference: &[String]) -> f64 {
    ngram_score(candidate, reference, MAX_N, 1.0)
}

pub fn bleu_with(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    ngram_score(candidate, reference, max_n, 1.0)
}

pub fn weighted_ngram(candidate: &[String], reference: &[String]) -> f64 {
    ngram_score(candidate, reference, MAX_N, DEFAULT_KEYWORD_WEIGHT)
}

pub fn weighted_ngram_with(
    candidate: &[String],
    reference: &[String],
    keyword_weight: f64,
) -> f64 {
    ngram_score(candidate, reference, MAX_N, keyword_weight)
}

/// Modified n-gram precision with clipped counts, geometric mean over
/// n = 1..max_n, add-epsilon smoothing in the numerator, and a brevity
/// penalty for short candidates. Each n-gram counts with the sum of its
/// per-token weights, so keyword weight 1 reduces to plain BLEU.
///
/// Orders the candidate is too short to populate are undefined, not zero;
/// they drop out of the mean so identical short programs still score 1.
fn ngram_score(candidate: &[String], reference: &[String], max_n: usize, kw_weight: f64) -> f64 {
    if candidate.is_empty() {
        return if reference.is_empty() { 1.0 } else { 0.0 };
    }
    let mut logs = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        if candidate.len() < n {
            break;
        }
        let cand_counts = ngram_counts(candidate, n);
        let ref_counts = ngram_counts(reference, n);
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (gram, count) in &cand_counts {
            let weight = gram_weight(gram, kw_weight);
            let matched = (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
            numerator += matched as f64 * weight;
            denominator += *count as f64 * weight;
        }
        if numerator <= 0.0 {
            numerator = EPSILON;
        }
        if denominator < 1.0 {
            denominator = 1.0;
        }
        logs.push((numerator / denominator).ln());
    }
    let orders = logs.len() as f64;
    let log_sum: f64 = logs.iter().map(|l| l / orders).sum();
    let brevity = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    brevity * log_sum.exp()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn gram_weight(gram: &[String], kw_weight: f64) -> f64 {
    gram.iter()
        .map(|t| if KEYWORDS.contains(&t.as_str()) { kw_weight } else { 1.0 })
        .sum()
}
