//! Recursive-descent parser over the lexer's token stream.

use super::lexer::{decode_escapes, lex, split_fstring, LexMode, RawFPart, Token, TokenKind};
use super::{
    CasePattern, DslErrorKind, DslExpr, DslParseError, DslProgram, DslStmt, DslStmtKind,
    FStringPart, MatchCase,
};

/// Statement keywords the language deliberately leaves out. Reported as
/// unsupported constructs rather than generic syntax errors so a validator
/// can name the offending feature.
const UNSUPPORTED: &[&str] = &[
    "def", "class", "import", "from", "lambda", "try", "except", "finally", "raise", "return",
    "yield", "with", "global", "nonlocal", "del", "assert", "async", "await", "break", "continue",
];

/// Hard keywords that can never be a plain expression name.
/// Positional arguments plus keyword pairs, in written order.
type CallArgs = (Vec<DslExpr>, Vec<(String, DslExpr)>);

const STRUCTURAL: &[&str] =
    &["if", "elif", "else", "for", "while", "in", "and", "or", "not", "pass"];

pub(super) fn parse(code: &str) -> Result<DslProgram, DslParseError> {
    let tokens = lex(code, LexMode::Strict)?;
    Parser { tokens, pos: 0, max_line: 1 }.parse_program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    max_line: usize,
}

impl Parser {
    fn current(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_kind(&self, ahead: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + ahead).map(|t| &t.kind)
    }

    fn advance(&mut self) -> Token {
        let token = self.current().clone();
        if !matches!(token.kind, TokenKind::Eof) {
            self.pos += 1;
        }
        // Only content tokens define how far a statement reaches; synthetic
        // tokens at end of file sit one line past the source.
        if !matches!(
            token.kind,
            TokenKind::Indent | TokenKind::Dedent | TokenKind::Newline | TokenKind::Eof
        ) {
            self.max_line = self.max_line.max(token.line);
        }
        token
    }

    fn at_name(&self, word: &str) -> bool {
        matches!(&self.current().kind, TokenKind::Name(n) if n == word)
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(&self.current().kind, TokenKind::Op(o) if o == op)
    }

    fn error(&self, kind: DslErrorKind, message: impl Into<String>) -> DslParseError {
        let token = self.current();
        DslParseError {
            line: token.line,
            col: token.col,
            token: token.text().to_string(),
            kind,
            message: message.into(),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> DslParseError {
        self.error(DslErrorKind::Syntax, message)
    }

    fn expect_op(&mut self, op: &str) -> Result<(), DslParseError> {
        if self.at_op(op) {
            self.advance();
            Ok(())
        } else {
            Err(self.syntax(format!("expected {op:?}")))
        }
    }

    fn parse_program(mut self) -> Result<DslProgram, DslParseError> {
        let mut statements = Vec::new();
        loop {
            while matches!(self.current().kind, TokenKind::Newline) {
                self.advance();
            }
            if matches!(self.current().kind, TokenKind::Eof) {
                break;
            }
            let stmt = self.parse_statement_or_comment()?;
            statements.push(stmt);
        }
        let mut source_map = Vec::with_capacity(statements.len());
        for (i, stmt) in statements.iter().enumerate() {
            let start = stmt.line;
            let end = match statements.get(i + 1) {
                Some(next) => (next.line - 1).max(start),
                None => self.max_line.max(start),
            };
            source_map.push((start, end));
        }
        Ok(DslProgram { statements, source_map })
    }

    fn parse_statement_or_comment(&mut self) -> Result<DslStmt, DslParseError> {
        if let TokenKind::Comment(text) = &self.current().kind {
            let text = text.clone();
            let line = self.current().line;
            self.advance();
            if matches!(self.current().kind, TokenKind::Newline) {
                self.advance();
            }
            return Ok(DslStmt { line, kind: DslStmtKind::Comment(text) });
        }
        self.parse_statement()
    }

    fn parse_statement(&mut self) -> Result<DslStmt, DslParseError> {
        let line = self.current().line;
        if let TokenKind::Name(word) = &self.current().kind {
            let word = word.clone();
            if UNSUPPORTED.contains(&word.as_str()) {
                return Err(self.error(
                    DslErrorKind::UnsupportedConstruct,
                    format!("{word:?} is not part of the workflow language"),
                ));
            }
            match word.as_str() {
                "if" => return self.parse_if(line),
                "for" => return self.parse_for(line),
                "while" => return self.parse_while(line),
                "pass" => {
                    self.advance();
                    self.end_simple()?;
                    return Ok(DslStmt { line, kind: DslStmtKind::Pass });
                }
                "elif" | "else" => {
                    return Err(self.syntax(format!("{word:?} without a matching 'if'")));
                }
                // Soft keyword: only a match statement when not used as a
                // plain name (assignment or call).
                "match"
                    if !matches!(
                        self.peek_kind(1),
                        Some(TokenKind::Op(o)) if o == "=" || o == "("
                    ) =>
                {
                    return self.parse_match(line);
                }
                _ => {}
            }
        }
        let expr = self.parse_expr()?;
        if self.at_op("=") {
            let target = match expr {
                DslExpr::Name(n) if !n.contains('.') => n,
                _ => return Err(self.syntax("assignment target must be a plain name")),
            };
            self.advance();
            let value = self.parse_expr()?;
            self.end_simple()?;
            return Ok(DslStmt { line, kind: DslStmtKind::Assign { target, expr: value } });
        }
        self.end_simple()?;
        Ok(DslStmt { line, kind: DslStmtKind::ExprStmt(expr) })
    }

    /// Finish a simple statement: optional inline comment, then newline.
    fn end_simple(&mut self) -> Result<(), DslParseError> {
        if matches!(self.current().kind, TokenKind::Comment(_)) {
            self.advance();
        }
        match self.current().kind {
            TokenKind::Newline => {
                self.advance();
                Ok(())
            }
            TokenKind::Eof => Ok(()),
            _ => Err(self.syntax("expected end of line")),
        }
    }

    fn parse_if(&mut self, line: usize) -> Result<DslStmt, DslParseError> {
        self.advance();
        let cond = self.parse_expr()?;
        let body = self.parse_suite()?;
        let mut elifs = Vec::new();
        while self.at_name("elif") {
            self.advance();
            let c = self.parse_expr()?;
            let b = self.parse_suite()?;
            elifs.push((c, b));
        }
        let else_body = if self.at_name("else") {
            self.advance();
            Some(self.parse_suite()?)
        } else {
            None
        };
        Ok(DslStmt { line, kind: DslStmtKind::If { cond, body, elifs, else_body } })
    }

    fn parse_for(&mut self, line: usize) -> Result<DslStmt, DslParseError> {
        self.advance();
        let var = self.expect_plain_name("loop variable")?;
        if !self.at_name("in") {
            return Err(self.syntax("expected 'in'"));
        }
        self.advance();
        let iterable = self.parse_expr()?;
        let body = self.parse_suite()?;
        Ok(DslStmt { line, kind: DslStmtKind::ForIn { var, iterable, body } })
    }

    fn parse_while(&mut self, line: usize) -> Result<DslStmt, DslParseError> {
        self.advance();
        let cond = self.parse_expr()?;
        let body = self.parse_suite()?;
        Ok(DslStmt { line, kind: DslStmtKind::While { cond, body } })
    }

    fn parse_match(&mut self, line: usize) -> Result<DslStmt, DslParseError> {
        self.advance();
        let subject = self.parse_expr()?;
        self.expect_op(":")?;
        if matches!(self.current().kind, TokenKind::Comment(_)) {
            self.advance();
        }
        if !matches!(self.current().kind, TokenKind::Newline) {
            return Err(self.syntax("a match statement requires an indented block"));
        }
        self.advance();
        let mut pending = self.take_comments();
        if !matches!(self.current().kind, TokenKind::Indent) {
            return Err(self.error(DslErrorKind::Indentation, "expected an indented block"));
        }
        self.advance();

        let mut cases = Vec::new();
        pending.extend(self.take_comments());
        if self.at_name("pass") {
            // A menu with no cases renders as a bare pass body.
            self.advance();
            self.end_simple()?;
        } else {
            while self.at_name("case") {
                let case_line = self.current().line;
                self.advance();
                let pattern = self.parse_case_pattern()?;
                let mut body = self.parse_suite()?;
                let mut with_comments = std::mem::take(&mut pending);
                with_comments.append(&mut body);
                cases.push(MatchCase { line: case_line, pattern, body: with_comments });
                pending = self.take_comments();
            }
            if cases.is_empty() {
                return Err(self.syntax("expected 'case'"));
            }
            if let Some(last) = cases.last_mut() {
                last.body.append(&mut pending);
            }
        }
        if !matches!(self.current().kind, TokenKind::Dedent) {
            return Err(self.syntax("expected 'case' or end of match block"));
        }
        self.advance();
        Ok(DslStmt { line, kind: DslStmtKind::Match { subject, cases } })
    }

    /// Skip blank lines and collect full-line comments. Both may sit between
    /// a block header and its first indented statement.
    fn take_comments(&mut self) -> Vec<DslStmt> {
        let mut out = Vec::new();
        loop {
            match &self.current().kind {
                TokenKind::Newline => {
                    self.advance();
                }
                TokenKind::Comment(text) => {
                    let stmt = DslStmt {
                        line: self.current().line,
                        kind: DslStmtKind::Comment(text.clone()),
                    };
                    self.advance();
                    if matches!(self.current().kind, TokenKind::Newline) {
                        self.advance();
                    }
                    out.push(stmt);
                }
                _ => break,
            }
        }
        out
    }

    fn parse_case_pattern(&mut self) -> Result<CasePattern, DslParseError> {
        let pattern = match &self.current().kind {
            TokenKind::Str { content, fstring: false, .. } => {
                CasePattern::Str(decode_escapes(content))
            }
            TokenKind::Number(raw) => CasePattern::Number(raw.clone()),
            TokenKind::Op(o) if o == "-" => {
                self.advance();
                match &self.current().kind {
                    TokenKind::Number(raw) => CasePattern::Number(format!("-{raw}")),
                    _ => return Err(self.syntax("expected a number after '-'")),
                }
            }
            TokenKind::Name(n) if n == "_" => CasePattern::Wildcard,
            TokenKind::Name(n) if n == "True" || n == "False" => CasePattern::Bool(n == "True"),
            TokenKind::Name(n)
                if !STRUCTURAL.contains(&n.as_str()) && !UNSUPPORTED.contains(&n.as_str()) =>
            {
                CasePattern::Capture(n.clone())
            }
            _ => return Err(self.syntax("expected a literal or name pattern")),
        };
        self.advance();
        Ok(pattern)
    }

    fn expect_plain_name(&mut self, what: &str) -> Result<String, DslParseError> {
        match &self.current().kind {
            TokenKind::Name(n)
                if !STRUCTURAL.contains(&n.as_str())
                    && !UNSUPPORTED.contains(&n.as_str())
                    && n != "True"
                    && n != "False"
                    && n != "None" =>
            {
                let n = n.clone();
                self.advance();
                Ok(n)
            }
            _ => Err(self.syntax(format!("expected a {what} name"))),
        }
    }

    /// `:` then either an inline statement or an indented block. Full-line
    /// comments directly under the header belong to the block.
    fn parse_suite(&mut self) -> Result<Vec<DslStmt>, DslParseError> {
        self.expect_op(":")?;
        if matches!(self.current().kind, TokenKind::Comment(_)) {
            self.advance();
        }
        if !matches!(self.current().kind, TokenKind::Newline) {
            let stmt = self.parse_statement()?;
            return Ok(vec![stmt]);
        }
        self.advance();
        let mut stmts = self.take_comments();
        if !matches!(self.current().kind, TokenKind::Indent) {
            return Err(self.error(DslErrorKind::Indentation, "expected an indented block"));
        }
        self.advance();
        loop {
            match self.current().kind {
                TokenKind::Newline => {
                    self.advance();
                }
                TokenKind::Dedent => {
                    self.advance();
                    break;
                }
                TokenKind::Eof => break,
                _ => stmts.push(self.parse_statement_or_comment()?),
            }
        }
        Ok(stmts)
    }

    fn parse_expr(&mut self) -> Result<DslExpr, DslParseError> {
        self.parse_or()
    }

    fn parse_or(&mut self) -> Result<DslExpr, DslParseError> {
        let mut lhs = self.parse_and()?;
        while self.at_name("or") {
            self.advance();
            let rhs = self.parse_and()?;
            lhs = DslExpr::BinOp { op: "or".into(), lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<DslExpr, DslParseError> {
        let mut lhs = self.parse_not()?;
        while self.at_name("and") {
            self.advance();
            let rhs = self.parse_not()?;
            lhs = DslExpr::BinOp { op: "and".into(), lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<DslExpr, DslParseError> {
        if self.at_name("not") && !matches!(self.peek_kind(1), Some(TokenKind::Name(n)) if n == "in")
        {
            self.advance();
            let operand = self.parse_not()?;
            return Ok(DslExpr::Unary { op: "not".into(), operand: Box::new(operand) });
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> Result<DslExpr, DslParseError> {
        let lhs = self.parse_additive()?;
        let op = if let TokenKind::Op(o) = &self.current().kind {
            match o.as_str() {
                "==" | "!=" | "<" | ">" | "<=" | ">=" => Some(o.clone()),
                _ => None,
            }
        } else if self.at_name("in") {
            Some("in".to_string())
        } else if self.at_name("not")
            && matches!(self.peek_kind(1), Some(TokenKind::Name(n)) if n == "in")
        {
            self.advance();
            Some("not in".to_string())
        } else {
            None
        };
        let Some(op) = op else { return Ok(lhs) };
        self.advance();
        let rhs = self.parse_additive()?;
        if matches!(&self.current().kind, TokenKind::Op(o) if ["==","!=","<",">","<=",">="].contains(&o.as_str()))
            || self.at_name("in")
        {
            return Err(self.syntax("comparison chaining is not supported"));
        }
        Ok(DslExpr::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn parse_additive(&mut self) -> Result<DslExpr, DslParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match &self.current().kind {
                TokenKind::Op(o) if o == "+" || o == "-" => o.clone(),
                _ => break,
            };
            self.advance();
            let rhs = self.parse_term()?;
            lhs = DslExpr::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<DslExpr, DslParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match &self.current().kind {
                TokenKind::Op(o) if ["*", "/", "%", "**", "//"].contains(&o.as_str()) => o.clone(),
                _ => break,
            };
            self.advance();
            let rhs = self.parse_unary()?;
            lhs = DslExpr::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<DslExpr, DslParseError> {
        if self.at_op("-") {
            self.advance();
            let operand = self.parse_unary()?;
            // A minus on a bare number folds into the literal.
            if let DslExpr::Number(raw) = &operand {
                if !raw.starts_with('-') {
                    return Ok(DslExpr::Number(format!("-{raw}")));
                }
            }
            return Ok(DslExpr::Unary { op: "-".into(), operand: Box::new(operand) });
        }
        if self.at_op("+") {
            self.advance();
            return self.parse_unary();
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<DslExpr, DslParseError> {
        let mut base = self.parse_atom()?;
        loop {
            if self.at_op(".") {
                let DslExpr::Name(name) = base else {
                    return Err(self.syntax("attribute access is only supported on names"));
                };
                self.advance();
                let part = self.expect_plain_name("attribute")?;
                base = DslExpr::Name(format!("{name}.{part}"));
            } else if self.at_op("(") {
                let line = self.current().line;
                let DslExpr::Name(name) = base else {
                    return Err(self.syntax("only named functions can be called"));
                };
                let (args, kwargs) = self.parse_call_args()?;
                base = DslExpr::Call { name, line, args, kwargs };
            } else if self.at_op("[") {
                self.advance();
                let index = self.parse_expr()?;
                self.expect_op("]")?;
                base = DslExpr::Subscript { base: Box::new(base), index: Box::new(index) };
            } else {
                break;
            }
        }
        Ok(base)
    }

    fn parse_call_args(&mut self) -> Result<CallArgs, DslParseError> {
        self.expect_op("(")?;
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, DslExpr)> = Vec::new();
        loop {
            if self.at_op(")") {
                self.advance();
                return Ok((args, kwargs));
            }
            let is_kwarg = matches!(&self.current().kind, TokenKind::Name(_))
                && matches!(self.peek_kind(1), Some(TokenKind::Op(o)) if o == "=");
            if is_kwarg {
                let TokenKind::Name(key) = self.current().kind.clone() else { unreachable!() };
                if kwargs.iter().any(|(k, _)| *k == key) {
                    return Err(self.syntax(format!("duplicate keyword argument {key:?}")));
                }
                self.advance();
                self.advance();
                let value = self.parse_expr()?;
                kwargs.push((key, value));
            } else {
                if !kwargs.is_empty() {
                    return Err(self.syntax("positional argument follows keyword argument"));
                }
                args.push(self.parse_expr()?);
            }
            if self.at_op(",") {
                self.advance();
            } else if !self.at_op(")") {
                return Err(self.syntax("expected ',' or ')'"));
            }
        }
    }

    fn parse_atom(&mut self) -> Result<DslExpr, DslParseError> {
        let token = self.current().clone();
        match &token.kind {
            TokenKind::Name(n) => {
                if UNSUPPORTED.contains(&n.as_str()) {
                    return Err(self.error(
                        DslErrorKind::UnsupportedConstruct,
                        format!("{n:?} is not part of the workflow language"),
                    ));
                }
                if STRUCTURAL.contains(&n.as_str()) {
                    return Err(self.syntax(format!("unexpected keyword {n:?}")));
                }
                self.advance();
                Ok(match n.as_str() {
                    "True" => DslExpr::Bool(true),
                    "False" => DslExpr::Bool(false),
                    "None" => DslExpr::NoneLit,
                    _ => DslExpr::Name(n.clone()),
                })
            }
            TokenKind::Number(raw) => {
                let raw = raw.clone();
                self.advance();
                Ok(DslExpr::Number(raw))
            }
            TokenKind::Str { content, fstring, .. } => {
                let content = content.clone();
                let fstring = *fstring;
                self.advance();
                if fstring {
                    self.parse_fstring(&content, &token)
                } else {
                    Ok(DslExpr::StringLit(decode_escapes(&content)))
                }
            }
            TokenKind::Op(o) => match o.as_str() {
                "(" => {
                    self.advance();
                    let inner = self.parse_expr()?;
                    self.expect_op(")")?;
                    Ok(inner)
                }
                "[" => self.parse_list(),
                "{" => self.parse_dict(),
                _ => Err(self.syntax("expected an expression")),
            },
            _ => Err(self.syntax("expected an expression")),
        }
    }

    fn parse_list(&mut self) -> Result<DslExpr, DslParseError> {
        self.expect_op("[")?;
        let mut items = Vec::new();
        loop {
            if self.at_op("]") {
                self.advance();
                return Ok(DslExpr::List(items));
            }
            items.push(self.parse_expr()?);
            if self.at_op(",") {
                self.advance();
            } else if !self.at_op("]") {
                return Err(self.syntax("expected ',' or ']'"));
            }
        }
    }

    fn parse_dict(&mut self) -> Result<DslExpr, DslParseError> {
        self.expect_op("{")?;
        let mut entries = Vec::new();
        loop {
            if self.at_op("}") {
                self.advance();
                return Ok(DslExpr::Dict(entries));
            }
            let key = self.parse_expr()?;
            self.expect_op(":")
                .map_err(|_| self.syntax("expected ':' in dict literal"))?;
            let value = self.parse_expr()?;
            entries.push((key, value));
            if self.at_op(",") {
                self.advance();
            } else if !self.at_op("}") {
                return Err(self.syntax("expected ',' or '}'"));
            }
        }
    }

    /// Parse the pieces of an f-string by sub-parsing each embedded
    /// expression. Errors are reported at the f-string token.
    fn parse_fstring(&mut self, content: &str, token: &Token) -> Result<DslExpr, DslParseError> {
        let reposition = |mut e: DslParseError| {
            e.line = token.line;
            e.col = token.col;
            e
        };
        let raw_parts = split_fstring(content).map_err(|message| DslParseError {
            line: token.line,
            col: token.col,
            token: token.text().to_string(),
            kind: DslErrorKind::Syntax,
            message,
        })?;
        let mut parts = Vec::with_capacity(raw_parts.len());
        for part in raw_parts {
            match part {
                RawFPart::Lit(text) => parts.push(FStringPart::Lit(decode_escapes(&text))),
                RawFPart::Expr(src) => {
                    let tokens = lex(&src, LexMode::Strict).map_err(reposition)?;
                    let mut sub = Parser { tokens, pos: 0, max_line: 1 };
                    let expr = sub.parse_expr().map_err(reposition)?;
                    while matches!(sub.current().kind, TokenKind::Newline) {
                        sub.advance();
                    }
                    if !matches!(sub.current().kind, TokenKind::Eof) {
                        return Err(reposition(
                            sub.syntax("invalid expression inside f-string"),
                        ));
                    }
                    parts.push(FStringPart::Expr(expr));
                }
            }
        }
        Ok(DslExpr::FString(parts))
    }
}
