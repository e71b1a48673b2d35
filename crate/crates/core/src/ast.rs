//! Recursive construction of a workflow AST from the flat action sequence.
//!
//! Control-flow actions carry a mode marker: 0 opens a block, 1 separates
//! (else branch or menu case), 2 closes. Blocks sharing one construct carry
//! the same grouping id. The builder keeps a cursor into the open-block stack
//! and appends nodes at the cursor.

use thiserror::Error;

use crate::ingest::{RawAction, RawShortcut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AstKind {
    Root,
    Call,
    If,
    Else,
    RepeatEach,
    RepeatCount,
    Menu,
    MenuCase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AstNode {
    pub kind: AstKind,
    pub action: Option<RawAction>,
    pub children: Vec<AstNode>,
}

impl AstNode {
    fn new(kind: AstKind, action: RawAction) -> Self {
        AstNode { kind, action: Some(action), children: Vec::new() }
    }

    fn root() -> Self {
        AstNode { kind: AstKind::Root, action: None, children: Vec::new() }
    }

    pub fn grouping_id(&self) -> Option<&str> {
        self.action.as_ref().and_then(|a| a.grouping_id.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowAst {
    pub root: AstNode,
}

impl WorkflowAst {
    /// Pre-order (kind, child count) pairs. Payload-free shape summary used
    /// to compare trees built from different sources.
    pub fn kind_skeleton(&self) -> Vec<(AstKind, usize)> {
        fn walk(node: &AstNode, out: &mut Vec<(AstKind, usize)>) {
            out.push((node.kind, node.children.len()));
            for child in &node.children {
                walk(child, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("unbalanced control flow at action {index}: {detail}")]
    UnbalancedControlFlow { index: usize, detail: String },
    #[error("separator marker at action {index} has no matching open block (grouping {grouping})")]
    OrphanElse { index: usize, grouping: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Conditional,
    RepeatEach,
    RepeatCount,
    Menu,
}

/// Control family of an action, or None for a plain call. An action without
/// a mode marker is never control flow; a marked action with an unrecognized
/// identifier gets conditional semantics, the least structured block form.
fn classify(action: &RawAction) -> Option<(Family, u8)> {
    let mode = action.control_flow_mode?;
    let id = action.identifier.as_str();
    let family = if id.ends_with(".repeat.each") {
        Family::RepeatEach
    } else if id.ends_with(".repeat.count") {
        Family::RepeatCount
    } else if id.ends_with(".choosefrommenu") {
        Family::Menu
    } else {
        Family::Conditional
    };
    Some((family, mode))
}

pub fn build_ast(s: &RawShortcut) -> Result<WorkflowAst, BuildError> {
    Builder { stack: vec![AstNode::root()] }.run(s)
}

struct Builder {
    stack: Vec<AstNode>,
}

impl Builder {
    fn run(mut self, s: &RawShortcut) -> Result<WorkflowAst, BuildError> {
        for (index, action) in s.actions.iter().enumerate() {
            match classify(action) {
                None => self.top().children.push(AstNode::new(AstKind::Call, action.clone())),
                Some((family, 0)) => {
                    let kind = match family {
                        Family::Conditional => AstKind::If,
                        Family::RepeatEach => AstKind::RepeatEach,
                        Family::RepeatCount => AstKind::RepeatCount,
                        Family::Menu => AstKind::Menu,
                    };
                    self.stack.push(AstNode::new(kind, action.clone()));
                }
                Some((Family::Conditional, 1)) => self.open_else(index, action)?,
                Some((Family::Menu, 1)) => self.open_case(index, action)?,
                // Loops have no separator form; a stray marker is inert.
                Some((_, 1)) => {}
                Some((family, 2)) => self.close_block(index, family, action)?,
                Some((_, _)) => unreachable!("ingest bounds the mode to 0..=2"),
            }
        }
        if self.stack.len() != 1 {
            return Err(BuildError::UnbalancedControlFlow {
                index: s.actions.len(),
                detail: format!("{} block(s) left open at end of input", self.stack.len() - 1),
            });
        }
        Ok(WorkflowAst { root: self.stack.pop().expect("root frame") })
    }

    fn top(&mut self) -> &mut AstNode {
        self.stack.last_mut().expect("stack holds at least the root")
    }

    /// Fold the top frame into its parent's children.
    fn fold_top(&mut self) {
        let node = self.stack.pop().expect("caller checked depth");
        self.top().children.push(node);
    }

    fn grouping_of(action: &RawAction) -> String {
        action.grouping_id.clone().unwrap_or_default()
    }

    /// Close the matching If and open its Else as the next sibling. Blocks
    /// left open above the If are folded on the way down.
    fn open_else(&mut self, index: usize, action: &RawAction) -> Result<(), BuildError> {
        let grouping = Self::grouping_of(action);
        loop {
            let top = self.stack.last().expect("root frame");
            if top.kind == AstKind::If && top.grouping_id() == Some(grouping.as_str()) {
                self.fold_top();
                self.stack.push(AstNode::new(AstKind::Else, action.clone()));
                return Ok(());
            }
            if self.stack.len() == 1 {
                return Err(BuildError::OrphanElse { index, grouping });
            }
            self.fold_top();
        }
    }

    /// Open the next case of the matching menu, closing the previous case
    /// (and anything left open inside it) first.
    fn open_case(&mut self, index: usize, action: &RawAction) -> Result<(), BuildError> {
        let grouping = Self::grouping_of(action);
        loop {
            let top = self.stack.last().expect("root frame");
            if top.kind == AstKind::Menu && top.grouping_id() == Some(grouping.as_str()) {
                self.stack.push(AstNode::new(AstKind::MenuCase, action.clone()));
                return Ok(());
            }
            if self.stack.len() == 1 {
                return Err(BuildError::OrphanElse { index, grouping });
            }
            self.fold_top();
        }
    }

    fn close_block(
        &mut self,
        index: usize,
        family: Family,
        action: &RawAction,
    ) -> Result<(), BuildError> {
        let grouping = Self::grouping_of(action);
        let err = |detail: String| BuildError::UnbalancedControlFlow { index, detail };
        if self.stack.len() == 1 {
            return Err(err("close marker with no open block".into()));
        }
        let top = self.stack.last().expect("depth checked");
        let matches_grouping = top.grouping_id() == Some(grouping.as_str());
        match family {
            Family::Conditional => {
                if matches!(top.kind, AstKind::If | AstKind::Else) && matches_grouping {
                    self.fold_top();
                    return Ok(());
                }
            }
            Family::RepeatEach | Family::RepeatCount => {
                let kind = if family == Family::RepeatEach {
                    AstKind::RepeatEach
                } else {
                    AstKind::RepeatCount
                };
                if top.kind == kind && matches_grouping {
                    self.fold_top();
                    return Ok(());
                }
            }
            Family::Menu => {
                // The close marker of the final case also closes the menu.
                if top.kind == AstKind::MenuCase && matches_grouping {
                    self.fold_top();
                    self.fold_top();
                    return Ok(());
                }
                if top.kind == AstKind::Menu && matches_grouping {
                    self.fold_top();
                    return Ok(());
                }
            }
        }
        let top = self.stack.last().expect("depth checked");
        Err(err(format!(
            "close marker (grouping {grouping}) does not match open {:?} block (grouping {:?})",
            top.kind,
            top.grouping_id().unwrap_or("")
        )))
    }
}
