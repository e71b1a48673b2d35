//! Def-use extraction with alpha renaming.
//!
//! Variable identity is erased so that two programs differing only in
//! naming yield identical edge multisets: variables with at least one
//! assignment become `v0`, `v1`, ... in order of first definition, and
//! variables only ever read become `f0`, `f1`, ... in order of first use.

use std::collections::BTreeMap;

use super::{DslExpr, DslProgram, DslStmt, DslStmtKind, FStringPart};

/// One variable use. `Bound` ties the use to the `def_index`-th assignment
/// (0-based) of an alpha-renamed variable; `Free` marks a read with no
/// preceding assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DataflowEdge {
    Bound { var: String, def_index: usize },
    Free { var: String },
}

/// Collect every def-use edge of `program`, sorted so the result is a
/// canonical multiset. Control flow is traversed linearly: a definition is
/// visible to everything after it in statement order, branches included.
pub fn extract_dataflow(program: &DslProgram) -> Vec<DataflowEdge> {
    let mut walker = Walker::default();
    for stmt in &program.statements {
        walker.stmt(stmt);
    }
    walker.edges.sort();
    walker.edges
}

#[derive(Default)]
struct Walker {
    /// Original name -> (alpha name, number of assignments so far).
    bound: BTreeMap<String, (String, usize)>,
    free: BTreeMap<String, String>,
    edges: Vec<DataflowEdge>,
}

impl Walker {
    fn define(&mut self, name: &str) {
        match self.bound.get_mut(name) {
            Some((_, count)) => *count += 1,
            None => {
                let alpha = format!("v{}", self.bound.len());
                self.bound.insert(name.to_string(), (alpha, 1));
            }
        }
    }

    fn use_var(&mut self, name: &str) {
        if let Some((alpha, count)) = self.bound.get(name) {
            self.edges.push(DataflowEdge::Bound { var: alpha.clone(), def_index: count - 1 });
            return;
        }
        let next = format!("f{}", self.free.len());
        let alpha = self.free.entry(name.to_string()).or_insert(next);
        self.edges.push(DataflowEdge::Free { var: alpha.clone() });
    }

    fn stmt(&mut self, stmt: &DslStmt) {
        match &stmt.kind {
            DslStmtKind::Assign { target, expr } => {
                self.expr(expr);
                self.define(target);
            }
            DslStmtKind::ExprStmt(expr) => self.expr(expr),
            DslStmtKind::If { cond, body, elifs, else_body } => {
                self.expr(cond);
                for s in body {
                    self.stmt(s);
                }
                for (c, b) in elifs {
                    self.expr(c);
                    for s in b {
                        self.stmt(s);
                    }
                }
                if let Some(b) = else_body {
                    for s in b {
                        self.stmt(s);
                    }
                }
            }
            DslStmtKind::ForIn { var, iterable, body } => {
                self.expr(iterable);
                self.define(var);
                for s in body {
                    self.stmt(s);
                }
            }
            DslStmtKind::While { cond, body } => {
                self.expr(cond);
                for s in body {
                    self.stmt(s);
                }
            }
            DslStmtKind::Match { subject, cases } => {
                self.expr(subject);
                // Case patterns are literals or inert names, never definitions.
                for case in cases {
                    for s in &case.body {
                        self.stmt(s);
                    }
                }
            }
            DslStmtKind::Pass | DslStmtKind::Comment(_) => {}
        }
    }

    fn expr(&mut self, expr: &DslExpr) {
        match expr {
            DslExpr::Name(name) => self.use_var(name),
            // The callee is an action identifier, not a data value.
            DslExpr::Call { args, kwargs, .. } => {
                for a in args {
                    self.expr(a);
                }
                for (_, v) in kwargs {
                    self.expr(v);
                }
            }
            DslExpr::FString(parts) => {
                for part in parts {
                    if let FStringPart::Expr(e) = part {
                        self.expr(e);
                    }
                }
            }
            DslExpr::List(items) => {
                for item in items {
                    self.expr(item);
                }
            }
            DslExpr::Dict(entries) => {
                for (k, v) in entries {
                    self.expr(k);
                    self.expr(v);
                }
            }
            DslExpr::BinOp { lhs, rhs, .. } | DslExpr::Compare { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            DslExpr::Unary { operand, .. } => self.expr(operand),
            DslExpr::Subscript { base, index } => {
                self.expr(base);
                self.expr(index);
            }
            DslExpr::StringLit(_) | DslExpr::Number(_) | DslExpr::Bool(_) | DslExpr::NoneLit => {}
        }
    }
}
