//! Pre-order code emission from a workflow AST.

use thiserror::Error;

use crate::ast::{AstKind, AstNode, WorkflowAst};
use crate::ingest::{Attachment, ParamValue, RawAction};
use crate::naming::{sanitize_identifier, NamingPlan};

const INDENT: &str = "    ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MenuStyle {
    /// match/case rendering.
    MatchCase,
    /// if/elif chain over a synthesized choice variable. Changes the tree
    /// shape relative to the source AST; round-trip comparisons assume
    /// MatchCase.
    IfElif,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitOptions {
    pub menu_style: MenuStyle,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions { menu_style: MenuStyle::MatchCase }
    }
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("binary parameter {key:?} of {action} cannot appear in generated code")]
    BinaryParam { action: String, key: String },
    #[error("attachment references output uuid {uuid} which has no name")]
    DanglingReference { uuid: String },
}

/// Value-level failures, wrapped with action context by the caller.
enum ValueError {
    Binary,
    Dangling(String),
}

pub fn emit_code(ast: &WorkflowAst, names: &NamingPlan) -> Result<String, EmitError> {
    emit_code_with(ast, names, &EmitOptions::default())
}

pub fn emit_code_with(
    ast: &WorkflowAst,
    names: &NamingPlan,
    options: &EmitOptions,
) -> Result<String, EmitError> {
    let mut emitter = Emitter {
        names,
        options: *options,
        out: String::new(),
        menu_ordinal: 0,
    };
    emitter.emit_block(&ast.root.children, 0, 0)?;
    Ok(emitter.out)
}

pub fn function_name(identifier: &str) -> String {
    sanitize_identifier(&identifier.replace('.', "_"))
}

struct Emitter<'a> {
    names: &'a NamingPlan,
    options: EmitOptions,
    out: String,
    menu_ordinal: usize,
}

impl<'a> Emitter<'a> {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    /// Emit a statement list; an empty list becomes `pass`.
    fn emit_block(
        &mut self,
        children: &[AstNode],
        depth: usize,
        loop_depth: usize,
    ) -> Result<(), EmitError> {
        if children.is_empty() && depth > 0 {
            self.line(depth, "pass");
            return Ok(());
        }
        for child in children {
            self.emit_node(child, depth, loop_depth)?;
        }
        Ok(())
    }

    fn emit_node(
        &mut self,
        node: &AstNode,
        depth: usize,
        loop_depth: usize,
    ) -> Result<(), EmitError> {
        let action = node.action.as_ref().expect("non-root nodes carry an action");
        match node.kind {
            AstKind::Root => unreachable!("root is emitted via emit_block"),
            AstKind::Call => {
                let text = self.render_call(action)?;
                self.line(depth, &text);
                Ok(())
            }
            AstKind::If => {
                let cond = render_condition(action, self.names)?;
                self.line(depth, &format!("if {cond}:"));
                self.emit_block(&node.children, depth + 1, loop_depth)
            }
            AstKind::Else => {
                self.line(depth, "else:");
                self.emit_block(&node.children, depth + 1, loop_depth)
            }
            AstKind::RepeatCount => {
                let count = match action.params.get("WFRepeatCount") {
                    Some(v) => self.render_value(v).map_err(|e| contextualize(e, action))?,
                    None => "1".to_string(),
                };
                let var = format!("i_{}", loop_depth + 1);
                self.line(depth, &format!("for {var} in range({count}):"));
                self.emit_block(&node.children, depth + 1, loop_depth + 1)
            }
            AstKind::RepeatEach => {
                let iterable = match action.params.get("WFInput") {
                    Some(v) => self.render_value(v).map_err(|e| contextualize(e, action))?,
                    None => "[]".to_string(),
                };
                let var = format!("item_{}", loop_depth + 1);
                self.line(depth, &format!("for {var} in {iterable}:"));
                self.emit_block(&node.children, depth + 1, loop_depth + 1)
            }
            AstKind::Menu => self.emit_menu(node, action, depth, loop_depth),
            AstKind::MenuCase => {
                unreachable!("menu cases are emitted by their menu")
            }
        }
    }

    fn emit_menu(
        &mut self,
        node: &AstNode,
        action: &RawAction,
        depth: usize,
        loop_depth: usize,
    ) -> Result<(), EmitError> {
        self.menu_ordinal += 1;
        let ordinal = self.menu_ordinal;
        let subject = match action.params.get("WFMenuPrompt") {
            Some(ParamValue::Text(prompt)) => format!("input({})", quote_single(prompt)),
            Some(v) => self.render_value(v).map_err(|e| contextualize(e, action))?,
            None => "input()".to_string(),
        };

        // Stray non-case children (possible in hand-built trees) run before
        // the dispatch so their effects are preserved.
        let (cases, strays): (Vec<&AstNode>, Vec<&AstNode>) =
            node.children.iter().partition(|c| c.kind == AstKind::MenuCase);
        for stray in &strays {
            self.emit_node(stray, depth, loop_depth)?;
        }

        match self.options.menu_style {
            MenuStyle::MatchCase => {
                self.line(depth, &format!("match {subject}:"));
                if cases.is_empty() {
                    self.line(depth + 1, "pass");
                }
                for case in cases {
                    let label = case_label(case);
                    self.line(depth + 1, &format!("case {label}:"));
                    self.emit_block(&case.children, depth + 2, loop_depth)?;
                }
            }
            MenuStyle::IfElif => {
                let choice = format!("choice_{ordinal}");
                self.line(depth, &format!("{choice} = {subject}"));
                for (i, case) in cases.iter().enumerate() {
                    let keyword = if i == 0 { "if" } else { "elif" };
                    let label = case_label(case);
                    let cond = if label == "_" {
                        "True".to_string()
                    } else {
                        format!("{choice} == {label}")
                    };
                    self.line(depth, &format!("{keyword} {cond}:"));
                    self.emit_block(&case.children, depth + 1, loop_depth)?;
                }
            }
        }
        Ok(())
    }

    fn render_call(&self, action: &RawAction) -> Result<String, EmitError> {
        let mut args = Vec::new();
        for (key, value) in &action.params {
            let rendered = self.render_value(value).map_err(|e| match e {
                ValueError::Binary => EmitError::BinaryParam {
                    action: action.identifier.clone(),
                    key: key.clone(),
                },
                other => contextualize(other, action),
            })?;
            args.push(format!("{}={rendered}", sanitize_identifier(key)));
        }
        let call = format!("{}({})", function_name(&action.identifier), args.join(", "));
        match action.uuid.as_deref().and_then(|u| self.names.name_for(u)) {
            Some(name) => Ok(format!("{name} = {call}")),
            None => Ok(call),
        }
    }

    fn render_value(&self, value: &ParamValue) -> Result<String, ValueError> {
        render_value(value, self.names)
    }
}

fn contextualize(e: ValueError, action: &RawAction) -> EmitError {
    match e {
        ValueError::Binary => EmitError::BinaryParam {
            action: action.identifier.clone(),
            key: String::new(),
        },
        ValueError::Dangling(uuid) => EmitError::DanglingReference { uuid },
    }
}

fn case_label(case: &AstNode) -> String {
    match case.action.as_ref().and_then(|a| a.params.get("WFMenuItemTitle")) {
        Some(ParamValue::Text(title)) => quote_single(title),
        _ => "_".to_string(),
    }
}

fn render_value(value: &ParamValue, names: &NamingPlan) -> Result<String, ValueError> {
    Ok(match value {
        ParamValue::Text(s) => quote_single(s),
        ParamValue::Integer(i) => i.to_string(),
        ParamValue::Real(r) => format!("{r:?}"),
        ParamValue::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        ParamValue::List(items) => {
            let parts: Result<Vec<_>, _> =
                items.iter().map(|v| render_value(v, names)).collect();
            format!("[{}]", parts?.join(", "))
        }
        ParamValue::Map(entries) => {
            let mut parts = Vec::new();
            for (k, v) in entries {
                parts.push(format!("{}: {}", quote_single(k), render_value(v, names)?));
            }
            format!("{{{}}}", parts.join(", "))
        }
        ParamValue::Binary(_) => return Err(ValueError::Binary),
        ParamValue::Attachment(Attachment::ActionOutput { output_uuid, .. }) => {
            match names.name_for(output_uuid) {
                Some(name) => name.to_string(),
                None => return Err(ValueError::Dangling(output_uuid.clone())),
            }
        }
        ParamValue::Attachment(Attachment::Ask { prompt }) => match prompt {
            Some(p) => format!("f'{{input(\"{}\")}}'", escape_double(p)),
            None => "f'{input()}'".to_string(),
        },
    })
}

/// Condition text for an If node. Known comparison names map onto operators;
/// anything else falls back to a `cond_<name>(...)` call so the output always
/// parses.
pub fn render_condition(action: &RawAction, names: &NamingPlan) -> Result<String, EmitError> {
    render_condition_inner(action, names).map_err(|e| contextualize(e, action))
}

fn render_condition_inner(action: &RawAction, names: &NamingPlan) -> Result<String, ValueError> {
    let input = match action.params.get("WFInput") {
        Some(v) => render_value(v, names)?,
        None => return Ok("True".to_string()),
    };
    let operand = match action
        .params
        .get("WFConditionalActionString")
        .or_else(|| action.params.get("WFNumberValue"))
    {
        Some(v) => Some(render_value(v, names)?),
        None => None,
    };
    let condition = match action.params.get("WFCondition") {
        Some(ParamValue::Text(name)) => name.clone(),
        Some(other) => render_value(other, names)?,
        None => return Ok(input),
    };

    if let Some(op) = operand.as_deref() {
        match condition.as_str() {
            "Equals" => return Ok(format!("{input} == {op}")),
            "Does Not Equal" => return Ok(format!("{input} != {op}")),
            "Contains" => return Ok(format!("{op} in {input}")),
            "Does Not Contain" => return Ok(format!("{op} not in {input}")),
            "Is Greater Than" => return Ok(format!("{input} > {op}")),
            "Is Less Than" => return Ok(format!("{input} < {op}")),
            _ => {}
        }
    }
    let fn_name = sanitize_identifier(&format!("cond_{}", condition.to_lowercase()));
    Ok(match operand {
        Some(op) => format!("{fn_name}({input}, {op})"),
        None => format!("{fn_name}({input})"),
    })
}

fn quote_single(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn escape_double(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}
