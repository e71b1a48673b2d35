//! Syntactic and semantic metric components: clipped subtree overlap and
//! clipped dataflow-edge overlap.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::ast::{AstKind, AstNode};
use crate::wfdsl::{extract_dataflow, to_ast, DslProgram};

/// Denominator choice for the subtree score. The reference-side denominator
/// is the default (recall-style); the other two are exposed for callers that
/// want precision or a symmetric score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AstMatchMode {
    #[default]
    Reference,
    Candidate,
    Symmetric,
}

pub fn ast_match(candidate: &DslProgram, reference: &DslProgram) -> f64 {
    ast_match_with(candidate, reference, AstMatchMode::Reference)
}

/// Clipped multiset overlap of kind-skeleton subtrees. Every node except the
/// synthetic root contributes the shape of the subtree below it; identifiers
/// and literals are already erased by the shape summary.
pub fn ast_match_with(candidate: &DslProgram, reference: &DslProgram, mode: AstMatchMode) -> f64 {
    let ref_subtrees = subtree_multiset(reference);
    let cand_subtrees = subtree_multiset(candidate);
    let ref_total: usize = ref_subtrees.values().sum();
    let cand_total: usize = cand_subtrees.values().sum();
    let matched: usize = ref_subtrees
        .iter()
        .map(|(shape, count)| (*count).min(cand_subtrees.get(shape).copied().unwrap_or(0)))
        .sum();
    match mode {
        AstMatchMode::Reference => ratio(matched, ref_total),
        AstMatchMode::Candidate => ratio(matched, cand_total),
        AstMatchMode::Symmetric => ratio(2 * matched, ref_total + cand_total),
    }
}

/// Clipped overlap of alpha-normalized def-use edges, normalized by the
/// reference edge count. A reference without edges matches anything.
pub fn dataflow_match(candidate: &DslProgram, reference: &DslProgram) -> f64 {
    let ref_edges = extract_dataflow(reference);
    if ref_edges.is_empty() {
        return 1.0;
    }
    let cand_edges = extract_dataflow(candidate);
    let mut matched = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < ref_edges.len() && j < cand_edges.len() {
        match ref_edges[i].cmp(&cand_edges[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                matched += 1;
                i += 1;
                j += 1;
            }
        }
    }
    matched as f64 / ref_edges.len() as f64
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        1.0
    } else {
        numerator as f64 / denominator as f64
    }
}

type Shape = Vec<(AstKind, usize)>;

fn subtree_multiset(p: &DslProgram) -> BTreeMap<Shape, usize> {
    let ast = to_ast(p);
    let mut counts = BTreeMap::new();
    for child in &ast.root.children {
        collect(child, &mut counts);
    }
    counts
}

fn collect(node: &AstNode, counts: &mut BTreeMap<Shape, usize>) {
    let mut shape = Vec::new();
    shape_of(node, &mut shape);
    *counts.entry(shape).or_insert(0) += 1;
    for child in &node.children {
        collect(child, counts);
    }
}

fn shape_of(node: &AstNode, out: &mut Shape) {
    out.push((node.kind, node.children.len()));
    for child in &node.children {
        shape_of(child, out);
    }
}
