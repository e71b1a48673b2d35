//! Minimal XML property-list reader. Handles exactly the element set Apple's
//! plist DTD defines (dict, array, string, integer, real, true, false, data,
//! date) plus prolog, doctype and comments. Errors carry byte offsets.

use std::collections::BTreeMap;

use base64::Engine as _;

use super::{IngestError, PlistValue};

pub(super) fn parse_plist(source: &[u8]) -> Result<PlistValue, IngestError> {
    let mut s = Scanner { src: source, pos: 0 };
    s.skip_misc()?;
    match s.read_tag()? {
        Tag::Open(name) if name == "plist" => {}
        tag => return Err(s.err_at(tag.offset(), "expected <plist>")),
    }
    let value = s.parse_value()?;
    s.skip_misc()?;
    match s.read_tag()? {
        Tag::Close(name, _) if name == "plist" => {}
        tag => return Err(s.err_at(tag.offset(), "expected </plist>")),
    }
    s.skip_misc()?;
    if s.pos < s.src.len() {
        return Err(s.err("trailing content after </plist>"));
    }
    Ok(value)
}

enum Tag {
    Open(String),
    SelfClosing(String),
    Close(String, usize),
}

impl Tag {
    fn offset(&self) -> Option<usize> {
        match self {
            Tag::Close(_, offset) => Some(*offset),
            _ => None,
        }
    }
}

struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn err(&self, message: impl Into<String>) -> IngestError {
        IngestError::Parse { offset: self.pos, message: message.into() }
    }

    fn err_at(&self, offset: Option<usize>, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            offset: offset.unwrap_or(self.pos),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn starts_with(&self, prefix: &[u8]) -> bool {
        self.src[self.pos..].starts_with(prefix)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    /// Whitespace, `<?...?>`, `<!DOCTYPE...>` and `<!--...-->`.
    fn skip_misc(&mut self) -> Result<(), IngestError> {
        loop {
            self.skip_ws();
            if self.starts_with(b"<?") {
                self.skip_until(b"?>", "unterminated processing instruction")?;
            } else if self.starts_with(b"<!--") {
                self.skip_until(b"-->", "unterminated comment")?;
            } else if self.starts_with(b"<!") {
                self.skip_doctype()?;
            } else {
                return Ok(());
            }
        }
    }

    fn skip_until(&mut self, end: &[u8], message: &str) -> Result<(), IngestError> {
        match self.src[self.pos..]
            .windows(end.len())
            .position(|w| w == end)
        {
            Some(p) => {
                self.pos += p + end.len();
                Ok(())
            }
            None => Err(self.err(message)),
        }
    }

    fn skip_doctype(&mut self) -> Result<(), IngestError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            match b {
                b'>' => {
                    self.pos += 1;
                    return Ok(());
                }
                b'"' | b'\'' => self.skip_quoted(b)?,
                _ => self.pos += 1,
            }
        }
        self.pos = start;
        Err(self.err("unterminated doctype"))
    }

    fn skip_quoted(&mut self, quote: u8) -> Result<(), IngestError> {
        self.pos += 1;
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == quote {
                return Ok(());
            }
        }
        Err(self.err("unterminated attribute value"))
    }

    fn read_tag(&mut self) -> Result<Tag, IngestError> {
        let open_offset = self.pos;
        if self.peek() != Some(b'<') {
            return Err(self.err("expected a tag"));
        }
        self.pos += 1;
        let closing = self.peek() == Some(b'/');
        if closing {
            self.pos += 1;
        }
        let name_start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'.' || b == b'-' || b == b'_')
        {
            self.pos += 1;
        }
        if self.pos == name_start {
            return Err(self.err("empty tag name"));
        }
        let name = std::str::from_utf8(&self.src[name_start..self.pos])
            .map_err(|_| self.err("tag name is not UTF-8"))?
            .to_string();

        // Attributes are skipped; plist content never keys off them.
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'>') => {
                    self.pos += 1;
                    return Ok(if closing {
                        Tag::Close(name, open_offset)
                    } else {
                        Tag::Open(name)
                    });
                }
                Some(b'/') if !closing && self.starts_with(b"/>") => {
                    self.pos += 2;
                    return Ok(Tag::SelfClosing(name));
                }
                Some(b'"') | Some(b'\'') => self.skip_quoted(self.peek().unwrap())?,
                Some(_) => self.pos += 1,
                None => return Err(self.err("unterminated tag")),
            }
        }
    }

    /// Text content up to the next `<`, with entities decoded.
    fn read_text(&mut self) -> Result<String, IngestError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == b'<' {
                break;
            }
            self.pos += 1;
        }
        let raw = std::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| self.err("text content is not UTF-8"))?;
        decode_entities(raw).map_err(|message| IngestError::Parse { offset: start, message })
    }

    fn expect_close(&mut self, name: &str) -> Result<(), IngestError> {
        match self.read_tag()? {
            Tag::Close(found, _) if found == name => Ok(()),
            tag => Err(self.err_at(tag.offset(), format!("expected </{name}>"))),
        }
    }

    fn parse_value(&mut self) -> Result<PlistValue, IngestError> {
        self.skip_misc()?;
        let tag_offset = self.pos;
        match self.read_tag()? {
            Tag::SelfClosing(name) => match name.as_str() {
                "true" => Ok(PlistValue::Bool(true)),
                "false" => Ok(PlistValue::Bool(false)),
                "dict" => Ok(PlistValue::Dict(BTreeMap::new())),
                "array" => Ok(PlistValue::Array(Vec::new())),
                "string" => Ok(PlistValue::String(String::new())),
                "data" => Ok(PlistValue::Data(Vec::new())),
                "date" => Ok(PlistValue::Date(String::new())),
                other => Err(IngestError::Parse {
                    offset: tag_offset,
                    message: format!("unexpected element <{other}/>"),
                }),
            },
            Tag::Open(name) => match name.as_str() {
                "dict" => self.parse_dict(),
                "array" => self.parse_array(),
                "string" => {
                    let text = self.read_text()?;
                    self.expect_close("string")?;
                    Ok(PlistValue::String(text))
                }
                "integer" => {
                    let text = self.read_text()?;
                    self.expect_close("integer")?;
                    text.trim().parse::<i64>().map(PlistValue::Integer).map_err(|_| {
                        IngestError::Parse {
                            offset: tag_offset,
                            message: format!("invalid integer {text:?}"),
                        }
                    })
                }
                "real" => {
                    let text = self.read_text()?;
                    self.expect_close("real")?;
                    text.trim().parse::<f64>().map(PlistValue::Real).map_err(|_| {
                        IngestError::Parse {
                            offset: tag_offset,
                            message: format!("invalid real {text:?}"),
                        }
                    })
                }
                "data" => {
                    let text = self.read_text()?;
                    self.expect_close("data")?;
                    let compact: String =
                        text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
                    base64::engine::general_purpose::STANDARD
                        .decode(compact.as_bytes())
                        .map(PlistValue::Data)
                        .map_err(|e| IngestError::Parse {
                            offset: tag_offset,
                            message: format!("invalid base64 data: {e}"),
                        })
                }
                "date" => {
                    let text = self.read_text()?;
                    self.expect_close("date")?;
                    Ok(PlistValue::Date(text.trim().to_string()))
                }
                "true" | "false" => {
                    let value = name == "true";
                    self.expect_close(&name)?;
                    Ok(PlistValue::Bool(value))
                }
                other => Err(IngestError::Parse {
                    offset: tag_offset,
                    message: format!("unexpected element <{other}>"),
                }),
            },
            Tag::Close(name, offset) => Err(IngestError::Parse {
                offset: offset.min(self.pos),
                message: format!("unexpected closing tag </{name}>"),
            }),
        }
    }

    fn parse_dict(&mut self) -> Result<PlistValue, IngestError> {
        let mut out = BTreeMap::new();
        loop {
            self.skip_misc()?;
            if self.starts_with(b"</") {
                self.expect_close("dict")?;
                return Ok(PlistValue::Dict(out));
            }
            let key_offset = self.pos;
            match self.read_tag()? {
                Tag::Open(name) if name == "key" => {}
                Tag::SelfClosing(name) if name == "key" => {
                    let value = self.parse_value()?;
                    out.insert(String::new(), value);
                    continue;
                }
                _ => {
                    return Err(IngestError::Parse {
                        offset: key_offset,
                        message: "expected <key> inside <dict>".into(),
                    });
                }
            }
            let key = self.read_text()?;
            self.expect_close("key")?;
            let value = self.parse_value()?;
            out.insert(key, value);
        }
    }

    fn parse_array(&mut self) -> Result<PlistValue, IngestError> {
        let mut out = Vec::new();
        loop {
            self.skip_misc()?;
            if self.starts_with(b"</") {
                self.expect_close("array")?;
                return Ok(PlistValue::Array(out));
            }
            out.push(self.parse_value()?);
        }
    }
}

fn decode_entities(raw: &str) -> Result<String, String> {
    if !raw.contains('&') {
        return Ok(raw.to_string());
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let semi = rest.find(';').ok_or_else(|| "unterminated entity".to_string())?;
        let entity = &rest[1..semi];
        match entity {
            "lt" => out.push('<'),
            "gt" => out.push('>'),
            "amp" => out.push('&'),
            "quot" => out.push('"'),
            "apos" => out.push('\''),
            _ if entity.starts_with("#x") || entity.starts_with("#X") => {
                let code = u32::from_str_radix(&entity[2..], 16)
                    .map_err(|_| format!("bad character reference &{entity};"))?;
                out.push(
                    char::from_u32(code)
                        .ok_or_else(|| format!("bad character reference &{entity};"))?,
                );
            }
            _ if entity.starts_with('#') => {
                let code = entity[1..]
                    .parse::<u32>()
                    .map_err(|_| format!("bad character reference &{entity};"))?;
                out.push(
                    char::from_u32(code)
                        .ok_or_else(|| format!("bad character reference &{entity};"))?,
                );
            }
            _ => return Err(format!("unknown entity &{entity};")),
        }
        rest = &rest[semi + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
