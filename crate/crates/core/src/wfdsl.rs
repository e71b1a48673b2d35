//! Parser and traversals for the restricted Python-style workflow language:
//! the transcriber's output language and the language model-generated
//! workflows are judged in.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::{AstKind, AstNode, WorkflowAst};
use crate::ingest::{ParamValue, RawAction};

pub mod dataflow;
pub mod lexer;
mod parser;

pub use dataflow::{extract_dataflow, DataflowEdge};
pub use lexer::{lex, lex_lenient, LexMode, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DslErrorKind {
    Lexical,
    Indentation,
    Syntax,
    UnsupportedConstruct,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind:?} error at line {line}, column {col}: {message}")]
pub struct DslParseError {
    pub line: usize,
    pub col: usize,
    /// Offending token text; empty when the error is positional.
    pub token: String,
    pub kind: DslErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DslProgram {
    pub statements: Vec<DslStmt>,
    /// (first line, last line) per top-level statement, 1-based inclusive.
    pub source_map: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DslStmt {
    pub line: usize,
    pub kind: DslStmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DslStmtKind {
    Assign { target: String, expr: DslExpr },
    ExprStmt(DslExpr),
    If {
        cond: DslExpr,
        body: Vec<DslStmt>,
        elifs: Vec<(DslExpr, Vec<DslStmt>)>,
        else_body: Option<Vec<DslStmt>>,
    },
    ForIn { var: String, iterable: DslExpr, body: Vec<DslStmt> },
    While { cond: DslExpr, body: Vec<DslStmt> },
    Match { subject: DslExpr, cases: Vec<MatchCase> },
    Pass,
    Comment(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchCase {
    pub line: usize,
    pub pattern: CasePattern,
    pub body: Vec<DslStmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CasePattern {
    Str(String),
    Number(String),
    Bool(bool),
    Wildcard,
    /// Bare-name capture pattern; inert for dataflow purposes.
    Capture(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DslExpr {
    Call {
        /// Dotted or plain function name as written.
        name: String,
        line: usize,
        args: Vec<DslExpr>,
        kwargs: Vec<(String, DslExpr)>,
    },
    Name(String),
    StringLit(String),
    FString(Vec<FStringPart>),
    /// Raw numeric text; a leading `-` marks a folded unary minus.
    Number(String),
    Bool(bool),
    NoneLit,
    List(Vec<DslExpr>),
    Dict(Vec<(DslExpr, DslExpr)>),
    BinOp { op: String, lhs: Box<DslExpr>, rhs: Box<DslExpr> },
    Compare { op: String, lhs: Box<DslExpr>, rhs: Box<DslExpr> },
    Unary { op: String, operand: Box<DslExpr> },
    Subscript { base: Box<DslExpr>, index: Box<DslExpr> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FStringPart {
    Lit(String),
    Expr(DslExpr),
}

pub fn parse(code: &str) -> Result<DslProgram, DslParseError> {
    parser::parse(code)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSite {
    /// Underscore-normalized function name (dots replaced).
    pub name: String,
    /// Keyword-argument names in source order.
    pub kwargs: Vec<String>,
    pub line: usize,
}

/// Every call expression in the program, in source order, including calls
/// nested in conditions, arguments and f-strings.
pub fn collect_calls(p: &DslProgram) -> Vec<CallSite> {
    collect_call_exprs(p)
        .into_iter()
        .map(|expr| {
            let DslExpr::Call { name, line, kwargs, .. } = expr else { unreachable!() };
            CallSite {
                name: name.replace('.', "_"),
                kwargs: kwargs.iter().map(|(k, _)| k.clone()).collect(),
                line: *line,
            }
        })
        .collect()
}

/// Same walk as [`collect_calls`] but yielding the call expressions
/// themselves, for callers that need argument values.
pub fn collect_call_exprs(p: &DslProgram) -> Vec<&DslExpr> {
    let mut out = Vec::new();
    for stmt in &p.statements {
        collect_calls_stmt(stmt, &mut out);
    }
    out
}

fn collect_calls_stmt<'a>(stmt: &'a DslStmt, out: &mut Vec<&'a DslExpr>) {
    match &stmt.kind {
        DslStmtKind::Assign { expr, .. } | DslStmtKind::ExprStmt(expr) => {
            collect_calls_expr(expr, out)
        }
        DslStmtKind::If { cond, body, elifs, else_body } => {
            collect_calls_expr(cond, out);
            body.iter().for_each(|s| collect_calls_stmt(s, out));
            for (c, b) in elifs {
                collect_calls_expr(c, out);
                b.iter().for_each(|s| collect_calls_stmt(s, out));
            }
            if let Some(b) = else_body {
                b.iter().for_each(|s| collect_calls_stmt(s, out));
            }
        }
        DslStmtKind::ForIn { iterable, body, .. } => {
            collect_calls_expr(iterable, out);
            body.iter().for_each(|s| collect_calls_stmt(s, out));
        }
        DslStmtKind::While { cond, body } => {
            collect_calls_expr(cond, out);
            body.iter().for_each(|s| collect_calls_stmt(s, out));
        }
        DslStmtKind::Match { subject, cases } => {
            collect_calls_expr(subject, out);
            for case in cases {
                case.body.iter().for_each(|s| collect_calls_stmt(s, out));
            }
        }
        DslStmtKind::Pass | DslStmtKind::Comment(_) => {}
    }
}

fn collect_calls_expr<'a>(expr: &'a DslExpr, out: &mut Vec<&'a DslExpr>) {
    match expr {
        DslExpr::Call { args, kwargs, .. } => {
            out.push(expr);
            args.iter().for_each(|a| collect_calls_expr(a, out));
            kwargs.iter().for_each(|(_, v)| collect_calls_expr(v, out));
        }
        DslExpr::FString(parts) => {
            for part in parts {
                if let FStringPart::Expr(e) = part {
                    collect_calls_expr(e, out);
                }
            }
        }
        DslExpr::List(items) => items.iter().for_each(|e| collect_calls_expr(e, out)),
        DslExpr::Dict(entries) => {
            for (k, v) in entries {
                collect_calls_expr(k, out);
                collect_calls_expr(v, out);
            }
        }
        DslExpr::BinOp { lhs, rhs, .. } | DslExpr::Compare { lhs, rhs, .. } => {
            collect_calls_expr(lhs, out);
            collect_calls_expr(rhs, out);
        }
        DslExpr::Unary { operand, .. } => collect_calls_expr(operand, out),
        DslExpr::Subscript { base, index } => {
            collect_calls_expr(base, out);
            collect_calls_expr(index, out);
        }
        DslExpr::Name(_)
        | DslExpr::StringLit(_)
        | DslExpr::Number(_)
        | DslExpr::Bool(_)
        | DslExpr::NoneLit => {}
    }
}

/// Rebuild an abstract workflow tree from parsed code. Pass and comments are
/// dropped; assignments of non-call expressions carry no action and are
/// dropped too (the emitter never produces them).
pub fn to_ast(p: &DslProgram) -> WorkflowAst {
    let mut root = AstNode { kind: AstKind::Root, action: None, children: Vec::new() };
    for stmt in &p.statements {
        convert_stmt(stmt, &mut root.children);
    }
    WorkflowAst { root }
}

fn convert_stmt(stmt: &DslStmt, out: &mut Vec<AstNode>) {
    match &stmt.kind {
        DslStmtKind::Assign { expr, .. } | DslStmtKind::ExprStmt(expr) => {
            if let DslExpr::Call { name, kwargs, .. } = expr {
                out.push(AstNode {
                    kind: AstKind::Call,
                    action: Some(call_action(name, kwargs)),
                    children: Vec::new(),
                });
            }
        }
        DslStmtKind::If { cond, body, elifs, else_body } => {
            convert_if(cond, body, elifs, else_body.as_deref(), out)
        }
        DslStmtKind::ForIn { iterable, body, .. } => {
            let is_count = matches!(iterable, DslExpr::Call { name, .. } if name == "range");
            let (kind, identifier) = if is_count {
                (AstKind::RepeatCount, "is.workflow.actions.repeat.count")
            } else {
                (AstKind::RepeatEach, "is.workflow.actions.repeat.each")
            };
            let mut action = RawAction::new(identifier);
            if is_count {
                if let DslExpr::Call { args, .. } = iterable {
                    if let Some(v) = args.first().and_then(literal_param) {
                        action.params.insert("WFRepeatCount".to_string(), v);
                    }
                }
            } else if let Some(v) = literal_param(iterable) {
                action.params.insert("WFInput".to_string(), v);
            }
            out.push(block_node(kind, action, body));
        }
        DslStmtKind::While { cond: _, body } => {
            let action = RawAction::new("is.workflow.actions.repeat.each");
            out.push(block_node(AstKind::RepeatEach, action, body));
        }
        DslStmtKind::Match { subject, cases } => {
            let mut action = RawAction::new("is.workflow.actions.choosefrommenu");
            if let DslExpr::Call { name, args, .. } = subject {
                if name == "input" {
                    if let Some(v) = args.first().and_then(literal_param) {
                        action.params.insert("WFMenuPrompt".to_string(), v);
                    }
                }
            }
            let mut menu = AstNode {
                kind: AstKind::Menu,
                action: Some(action),
                children: Vec::new(),
            };
            for case in cases {
                let mut case_action = RawAction::new("is.workflow.actions.choosefrommenu");
                if let CasePattern::Str(s) = &case.pattern {
                    case_action
                        .params
                        .insert("WFMenuItemTitle".to_string(), ParamValue::Text(s.clone()));
                }
                menu.children.push(block_node(AstKind::MenuCase, case_action, &case.body));
            }
            out.push(menu);
        }
        DslStmtKind::Pass | DslStmtKind::Comment(_) => {}
    }
}

fn convert_if(
    cond: &DslExpr,
    body: &[DslStmt],
    elifs: &[(DslExpr, Vec<DslStmt>)],
    else_body: Option<&[DslStmt]>,
    out: &mut Vec<AstNode>,
) {
    let action = if_action(cond);
    out.push(block_node(AstKind::If, action.clone(), body));
    match elifs.split_first() {
        Some(((elif_cond, elif_body), rest)) => {
            // elif chains become an Else holding the next If.
            let mut else_children = Vec::new();
            convert_if(elif_cond, elif_body, rest, else_body, &mut else_children);
            out.push(AstNode {
                kind: AstKind::Else,
                action: Some(action),
                children: else_children,
            });
        }
        None => {
            if let Some(eb) = else_body {
                out.push(block_node(AstKind::Else, action, eb));
            }
        }
    }
}

fn if_action(_cond: &DslExpr) -> RawAction {
    RawAction::new("is.workflow.actions.conditional")
}

fn block_node(kind: AstKind, action: RawAction, body: &[DslStmt]) -> AstNode {
    let mut node = AstNode { kind, action: Some(action), children: Vec::new() };
    for stmt in body {
        convert_stmt(stmt, &mut node.children);
    }
    node
}

fn call_action(name: &str, kwargs: &[(String, DslExpr)]) -> RawAction {
    let mut action = RawAction::new(name);
    for (key, value) in kwargs {
        if let Some(param) = literal_param(value) {
            action.params.insert(key.clone(), param);
        }
    }
    action
}

/// Best-effort literal conversion for synthesized action payloads.
/// Non-literal expressions are omitted; tree shape is what matters here.
fn literal_param(expr: &DslExpr) -> Option<ParamValue> {
    match expr {
        DslExpr::StringLit(s) => Some(ParamValue::Text(s.clone())),
        DslExpr::Number(raw) => {
            if let Ok(i) = raw.parse::<i64>() {
                Some(ParamValue::Integer(i))
            } else {
                raw.parse::<f64>().ok().map(ParamValue::Real)
            }
        }
        DslExpr::Bool(b) => Some(ParamValue::Bool(*b)),
        DslExpr::List(items) => {
            Some(ParamValue::List(items.iter().filter_map(literal_param).collect()))
        }
        DslExpr::Dict(entries) => {
            let mut map = BTreeMap::new();
            for (k, v) in entries {
                if let (DslExpr::StringLit(key), Some(value)) = (k, literal_param(v)) {
                    map.insert(key.clone(), value);
                }
            }
            Some(ParamValue::Map(map))
        }
        _ => None,
    }
}
