//! Indentation-sensitive lexer for the workflow DSL.
//!
//! Strict mode rejects anything outside the language; lenient mode never
//! fails and is meant for metric tokenization of arbitrary model output
//! (unknown characters pass through as operator tokens, bad dedents clamp to
//! the nearest open level, unterminated strings run to end of line).

use super::{DslErrorKind, DslParseError};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Name(String),
    /// Numeric literal, raw text preserved.
    Number(String),
    Str {
        /// Full literal as written, prefix and quotes included.
        raw: String,
        /// Text between the quotes, escapes not decoded.
        content: String,
        fstring: bool,
    },
    Op(String),
    Newline,
    Indent,
    Dedent,
    Comment(String),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub col: usize,
}

impl Token {
    /// Surface text for metric tokenization.
    pub fn text(&self) -> &str {
        match &self.kind {
            TokenKind::Name(s) => s,
            TokenKind::Number(s) => s,
            TokenKind::Str { raw, .. } => raw,
            TokenKind::Op(s) => s,
            TokenKind::Newline => "<newline>",
            TokenKind::Indent => "<indent>",
            TokenKind::Dedent => "<dedent>",
            TokenKind::Comment(s) => s,
            TokenKind::Eof => "<eof>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexMode {
    Strict,
    Lenient,
}

pub fn lex(source: &str, mode: LexMode) -> Result<Vec<Token>, DslParseError> {
    Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        mode,
        tokens: Vec::new(),
        indents: vec![0],
        bracket_depth: 0,
        at_line_start: true,
    }
    .run()
}

/// Lenient lexing cannot fail.
pub fn lex_lenient(source: &str) -> Vec<Token> {
    lex(source, LexMode::Lenient).expect("lenient mode is total")
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    mode: LexMode,
    tokens: Vec<Token>,
    indents: Vec<usize>,
    bracket_depth: usize,
    at_line_start: bool,
}

impl Lexer {
    fn error(&self, kind: DslErrorKind, token: &str, message: &str) -> DslParseError {
        DslParseError {
            line: self.line,
            col: self.col,
            token: token.to_string(),
            kind,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokenKind, line: usize, col: usize) {
        self.tokens.push(Token { kind, line, col });
    }

    fn run(mut self) -> Result<Vec<Token>, DslParseError> {
        loop {
            if self.at_line_start && self.bracket_depth == 0 {
                if !self.handle_line_start()? {
                    break;
                }
                continue;
            }
            match self.peek() {
                None => break,
                Some('\n') => {
                    self.bump();
                    if self.bracket_depth == 0 {
                        let (line, col) = (self.line - 1, 1);
                        self.push(TokenKind::Newline, line, col);
                        self.at_line_start = true;
                    }
                }
                Some(c) if c == ' ' || c == '\t' || c == '\r' => {
                    self.bump();
                }
                Some('#') => {
                    let (line, col) = (self.line, self.col);
                    let text = self.take_comment();
                    if self.bracket_depth == 0 {
                        self.push(TokenKind::Comment(text), line, col);
                    }
                }
                Some(_) => self.lex_token()?,
            }
        }
        // Close out the final logical line and any open blocks.
        if !matches!(
            self.tokens.last().map(|t| &t.kind),
            None | Some(TokenKind::Newline) | Some(TokenKind::Indent) | Some(TokenKind::Dedent)
        ) {
            self.push(TokenKind::Newline, self.line, self.col);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, self.line, self.col);
        }
        self.push(TokenKind::Eof, self.line, self.col);
        Ok(self.tokens)
    }

    /// Measure indentation and emit Indent/Dedent. Blank lines and
    /// comment-only lines leave the indent stack untouched; the comment still
    /// becomes a token. Returns false at end of input.
    fn handle_line_start(&mut self) -> Result<bool, DslParseError> {
        let mut width = 0usize;
        let mut scan = self.pos;
        loop {
            match self.chars.get(scan) {
                Some(' ') => width += 1,
                Some('\t') => {
                    if self.mode == LexMode::Strict {
                        self.skip_to(scan);
                        return Err(self.error(
                            DslErrorKind::Indentation,
                            "\t",
                            "tab character in indentation",
                        ));
                    }
                    width += 1;
                }
                Some('\r') => {}
                _ => break,
            }
            scan += 1;
        }
        match self.chars.get(scan) {
            None => {
                self.skip_to(scan);
                return Ok(false);
            }
            Some('\n') => {
                self.skip_to(scan);
                self.bump();
                return Ok(true);
            }
            Some('#') => {
                self.skip_to(scan);
                let (line, col) = (self.line, self.col);
                let text = self.take_comment();
                self.push(TokenKind::Comment(text), line, col);
                if self.peek() == Some('\n') {
                    self.bump();
                    let line = self.line - 1;
                    self.push(TokenKind::Newline, line, 1);
                }
                return Ok(true);
            }
            Some(_) => {}
        }

        let current = *self.indents.last().expect("indent stack is never empty");
        if width > current {
            self.indents.push(width);
            self.push(TokenKind::Indent, self.line, 1);
        } else if width < current {
            while *self.indents.last().unwrap() > width {
                self.indents.pop();
                self.push(TokenKind::Dedent, self.line, 1);
            }
            if *self.indents.last().unwrap() != width && self.mode == LexMode::Strict {
                return Err(self.error(
                    DslErrorKind::Indentation,
                    "",
                    "unindent does not match any outer indentation level",
                ));
            }
        }
        self.skip_to(scan);
        self.at_line_start = false;
        Ok(true)
    }

    fn skip_to(&mut self, target: usize) {
        while self.pos < target {
            self.bump();
        }
    }

    fn take_comment(&mut self) -> String {
        self.bump(); // '#'
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            text.push(c);
            self.bump();
        }
        text.trim().to_string()
    }

    fn lex_token(&mut self) -> Result<(), DslParseError> {
        let (line, col) = (self.line, self.col);
        let c = self.peek().expect("caller checked");

        if c.is_ascii_alphabetic() || c == '_' {
            // A lone f/b prefix directly followed by a quote is a string.
            if (c == 'f' || c == 'b')
                && matches!(self.peek_at(1), Some('\'') | Some('"'))
            {
                return self.lex_string(line, col);
            }
            let mut name = String::new();
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    name.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            self.push(TokenKind::Name(name), line, col);
            return Ok(());
        }
        if c.is_ascii_digit() {
            return self.lex_number(line, col);
        }
        if c == '\'' || c == '"' {
            return self.lex_string(line, col);
        }

        for op in ["==", "!=", "<=", ">=", "**", "//"] {
            if self.chars[self.pos..].starts_with(&op.chars().collect::<Vec<_>>()[..]) {
                self.bump();
                self.bump();
                self.push(TokenKind::Op(op.to_string()), line, col);
                return Ok(());
            }
        }
        if "()[]{},:.=<>+-*/%;".contains(c) {
            match c {
                '(' | '[' | '{' => self.bracket_depth += 1,
                ')' | ']' | '}' => self.bracket_depth = self.bracket_depth.saturating_sub(1),
                _ => {}
            }
            self.bump();
            self.push(TokenKind::Op(c.to_string()), line, col);
            return Ok(());
        }

        if self.mode == LexMode::Strict {
            return Err(self.error(
                DslErrorKind::Lexical,
                &c.to_string(),
                &format!("unexpected character {c:?}"),
            ));
        }
        self.bump();
        self.push(TokenKind::Op(c.to_string()), line, col);
        Ok(())
    }

    fn lex_number(&mut self, line: usize, col: usize) -> Result<(), DslParseError> {
        let mut raw = String::new();
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            raw.push(self.bump().unwrap());
        }
        if self.peek() == Some('.') && matches!(self.peek_at(1), Some(c) if c.is_ascii_digit()) {
            raw.push(self.bump().unwrap());
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                raw.push(self.bump().unwrap());
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let mut ahead = 1;
            if matches!(self.peek_at(1), Some('+') | Some('-')) {
                ahead = 2;
            }
            if matches!(self.peek_at(ahead), Some(c) if c.is_ascii_digit()) {
                for _ in 0..ahead {
                    raw.push(self.bump().unwrap());
                }
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    raw.push(self.bump().unwrap());
                }
            }
        }
        self.push(TokenKind::Number(raw), line, col);
        Ok(())
    }

    fn lex_string(&mut self, line: usize, col: usize) -> Result<(), DslParseError> {
        let mut raw = String::new();
        let mut fstring = false;
        if matches!(self.peek(), Some('f') | Some('b')) {
            fstring = self.peek() == Some('f');
            raw.push(self.bump().unwrap());
        }
        let quote = self.bump().expect("caller checked quote");
        raw.push(quote);
        let mut content = String::new();
        // Inside an f-string, expression braces may carry nested strings with
        // either quote, so the terminator only counts at brace depth zero.
        let mut brace_depth = 0usize;
        let mut nested_quote: Option<char> = None;
        loop {
            match self.peek() {
                None | Some('\n') => {
                    if self.mode == LexMode::Strict {
                        return Err(DslParseError {
                            line,
                            col,
                            token: raw.clone(),
                            kind: DslErrorKind::Lexical,
                            message: "unterminated string literal".to_string(),
                        });
                    }
                    raw.push_str(&content);
                    self.push(TokenKind::Str { raw, content, fstring }, line, col);
                    return Ok(());
                }
                Some('\\') => {
                    content.push(self.bump().unwrap());
                    if let Some(c) = self.peek() {
                        if c != '\n' {
                            content.push(self.bump().unwrap());
                        }
                    }
                }
                Some(c) => {
                    if let Some(q) = nested_quote {
                        if c == q {
                            nested_quote = None;
                        }
                    } else if fstring
                        && (c == '{' || c == '}')
                        && brace_depth == 0
                        && self.peek_at(1) == Some(c)
                    {
                        // Doubled brace escape: both halves stay literal.
                        content.push(self.bump().unwrap());
                        content.push(self.bump().unwrap());
                        continue;
                    } else if fstring && c == '{' {
                        brace_depth += 1;
                    } else if fstring && c == '}' {
                        brace_depth = brace_depth.saturating_sub(1);
                    } else if brace_depth > 0 && (c == '\'' || c == '"') {
                        nested_quote = Some(c);
                    } else if c == quote && brace_depth == 0 {
                        self.bump();
                        raw.push_str(&content);
                        raw.push(quote);
                        self.push(TokenKind::Str { raw, content, fstring }, line, col);
                        return Ok(());
                    }
                    content.push(self.bump().unwrap());
                }
            }
        }
    }
}

/// Decode backslash escapes in string-literal content. Unknown escapes keep
/// both characters.
pub(crate) fn decode_escapes(content: &str) -> String {
    let mut out = String::with_capacity(content.len());
    let mut chars = content.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some('\\') => out.push('\\'),
            Some('\'') => out.push('\''),
            Some('"') => out.push('"'),
            Some('x') => {
                let hi = chars.next();
                let lo = chars.next();
                match (hi, lo) {
                    (Some(h), Some(l)) => {
                        match u8::from_str_radix(&format!("{h}{l}"), 16) {
                            Ok(b) => out.push(b as char),
                            Err(_) => {
                                out.push_str("\\x");
                                out.push(h);
                                out.push(l);
                            }
                        }
                    }
                    _ => out.push_str("\\x"),
                }
            }
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Raw f-string segments: literal runs and embedded expression sources.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RawFPart {
    Lit(String),
    Expr(String),
}

/// Split f-string content into literal and expression segments. `{{`/`}}`
/// escape to literal braces; a lone `}` outside an expression is an error.
pub(crate) fn split_fstring(content: &str) -> Result<Vec<RawFPart>, String> {
    let chars: Vec<char> = content.chars().collect();
    let mut parts = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '{' && chars.get(i + 1) == Some(&'{') {
            lit.push('{');
            i += 2;
        } else if c == '}' && chars.get(i + 1) == Some(&'}') {
            lit.push('}');
            i += 2;
        } else if c == '}' {
            return Err("single '}' in f-string".to_string());
        } else if c == '{' {
            if !lit.is_empty() {
                parts.push(RawFPart::Lit(std::mem::take(&mut lit)));
            }
            let mut depth = 1usize;
            let mut nested_quote: Option<char> = None;
            let mut expr = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated expression in f-string".to_string()),
                    Some(&c) => {
                        if let Some(q) = nested_quote {
                            if c == q {
                                nested_quote = None;
                            }
                            expr.push(c);
                        } else if c == '\'' || c == '"' {
                            nested_quote = Some(c);
                            expr.push(c);
                        } else if c == '{' {
                            depth += 1;
                            expr.push(c);
                        } else if c == '}' {
                            depth -= 1;
                            if depth == 0 {
                                i += 1;
                                break;
                            }
                            expr.push(c);
                        } else {
                            expr.push(c);
                        }
                        i += 1;
                    }
                }
            }
            if expr.trim().is_empty() {
                return Err("empty expression in f-string".to_string());
            }
            parts.push(RawFPart::Expr(expr));
        } else {
            lit.push(c);
            i += 1;
        }
    }
    if !lit.is_empty() {
        parts.push(RawFPart::Lit(lit));
    }
    Ok(parts)
}
