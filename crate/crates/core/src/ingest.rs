//! Ingestion of workflow property-list documents (XML plist or JSON) into a
//! flat, validated action sequence.

use std::collections::BTreeMap;

use thiserror::Error;

mod xml;

pub const KEY_ACTIONS: &str = "WFWorkflowActions";
pub const KEY_IDENTIFIER: &str = "WFWorkflowActionIdentifier";
pub const KEY_PARAMETERS: &str = "WFWorkflowActionParameters";
pub const KEY_CLIENT_VERSION: &str = "WFWorkflowClientVersion";
pub const KEY_TYPES: &str = "WFWorkflowTypes";
pub const KEY_CONTROL_FLOW_MODE: &str = "WFControlFlowMode";
pub const KEY_GROUPING: &str = "GroupingIdentifier";
pub const KEY_UUID: &str = "UUID";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("binary property list (bplist) input is not supported")]
    BinaryPlist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShortcutFormat {
    XmlPlist,
    Json,
}

/// Opaque byte payload. Kept out of generated code; transcription refuses it.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryBlob {
    pub data: Vec<u8>,
}

impl BinaryBlob {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Reference from one action's parameter to another value produced at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum Attachment {
    /// Points at the output of the action carrying `output_uuid` as its UUID.
    ActionOutput {
        output_uuid: String,
        output_name: Option<String>,
    },
    /// Value supplied interactively when the workflow runs.
    Ask { prompt: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Text(String),
    Integer(i64),
    Real(f64),
    Bool(bool),
    List(Vec<ParamValue>),
    Map(BTreeMap<String, ParamValue>),
    Binary(BinaryBlob),
    Attachment(Attachment),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    pub identifier: String,
    pub params: BTreeMap<String, ParamValue>,
    pub control_flow_mode: Option<u8>,
    pub grouping_id: Option<String>,
    pub uuid: Option<String>,
}

impl RawAction {
    pub fn new(identifier: &str) -> Self {
        RawAction {
            identifier: identifier.to_string(),
            params: BTreeMap::new(),
            control_flow_mode: None,
            grouping_id: None,
            uuid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawShortcut {
    pub client_version: String,
    pub workflow_types: Vec<String>,
    pub actions: Vec<RawAction>,
}

/// Structural plist value shared by the XML and JSON front ends.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PlistValue {
    String(String),
    Integer(i64),
    Real(f64),
    Bool(bool),
    Array(Vec<PlistValue>),
    Dict(BTreeMap<String, PlistValue>),
    Data(Vec<u8>),
    Date(String),
}

pub fn detect_format(source: &[u8]) -> Result<ShortcutFormat, IngestError> {
    if source.starts_with(b"bplist") {
        return Err(IngestError::BinaryPlist);
    }
    match source.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'<') => Ok(ShortcutFormat::XmlPlist),
        Some(b'{') => Ok(ShortcutFormat::Json),
        _ => Err(IngestError::Parse {
            offset: 0,
            message: "cannot detect document format".into(),
        }),
    }
}

pub fn parse_shortcut(source: &[u8], format: ShortcutFormat) -> Result<RawShortcut, IngestError> {
    if source.starts_with(b"bplist") {
        return Err(IngestError::BinaryPlist);
    }
    let root = match format {
        ShortcutFormat::XmlPlist => xml::parse_plist(source)?,
        ShortcutFormat::Json => json_to_plist_root(source)?,
    };
    shortcut_from_plist(root)
}

fn json_to_plist_root(source: &[u8]) -> Result<PlistValue, IngestError> {
    let value: serde_json::Value = serde_json::from_slice(source).map_err(|e| {
        IngestError::Parse {
            offset: byte_offset(source, e.line(), e.column()),
            message: e.to_string(),
        }
    })?;
    json_to_plist(value)
}

/// Convert 1-based line/column from serde_json into a byte offset.
fn byte_offset(source: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    let mut remaining = line - 1;
    while remaining > 0 {
        match source[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => break,
        }
        remaining -= 1;
    }
    (offset + column.saturating_sub(1)).min(source.len())
}

fn json_to_plist(value: serde_json::Value) -> Result<PlistValue, IngestError> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => {
            return Err(IngestError::Schema("null value in document".into()));
        }
        Value::Bool(b) => PlistValue::Bool(b),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                PlistValue::Integer(i)
            } else if let Some(f) = n.as_f64() {
                PlistValue::Real(f)
            } else {
                return Err(IngestError::Schema(format!("unrepresentable number {n}")));
            }
        }
        Value::String(s) => match decode_bytes_literal(&s) {
            Some(bytes) => PlistValue::Data(bytes),
            None => PlistValue::String(s),
        },
        Value::Array(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(json_to_plist(item)?);
            }
            PlistValue::Array(out)
        }
        Value::Object(entries) => {
            let mut out = BTreeMap::new();
            for (k, v) in entries {
                out.insert(k, json_to_plist(v)?);
            }
            PlistValue::Dict(out)
        }
    })
}

fn shortcut_from_plist(root: PlistValue) -> Result<RawShortcut, IngestError> {
    let mut dict = match root {
        PlistValue::Dict(d) => d,
        _ => return Err(IngestError::Schema("top-level value is not a dictionary".into())),
    };

    let client_version = match dict.remove(KEY_CLIENT_VERSION) {
        None => String::new(),
        Some(PlistValue::String(s)) => s,
        Some(PlistValue::Integer(i)) => i.to_string(),
        Some(_) => {
            return Err(IngestError::Schema(format!("{KEY_CLIENT_VERSION} is not a string")));
        }
    };

    let workflow_types = match dict.remove(KEY_TYPES) {
        None => Vec::new(),
        Some(PlistValue::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    PlistValue::String(s) => out.push(s),
                    _ => {
                        return Err(IngestError::Schema(format!(
                            "{KEY_TYPES} entry is not a string"
                        )));
                    }
                }
            }
            out
        }
        Some(_) => return Err(IngestError::Schema(format!("{KEY_TYPES} is not an array"))),
    };

    let raw_actions = match dict.remove(KEY_ACTIONS) {
        Some(PlistValue::Array(items)) => items,
        Some(_) => return Err(IngestError::Schema(format!("{KEY_ACTIONS} is not an array"))),
        None => return Err(IngestError::Schema(format!("missing {KEY_ACTIONS} array"))),
    };

    let mut actions = Vec::with_capacity(raw_actions.len());
    for (index, entry) in raw_actions.into_iter().enumerate() {
        actions.push(action_from_plist(index, entry)?);
    }

    Ok(RawShortcut { client_version, workflow_types, actions })
}

fn action_from_plist(index: usize, entry: PlistValue) -> Result<RawAction, IngestError> {
    let mut dict = match entry {
        PlistValue::Dict(d) => d,
        _ => {
            return Err(IngestError::Schema(format!("action {index} is not a dictionary")));
        }
    };

    let identifier = match dict.remove(KEY_IDENTIFIER) {
        Some(PlistValue::String(s)) if !s.is_empty() => s,
        Some(PlistValue::String(_)) => {
            return Err(IngestError::Schema(format!("action {index} has an empty identifier")));
        }
        _ => {
            return Err(IngestError::Schema(format!("action {index} is missing {KEY_IDENTIFIER}")));
        }
    };

    let mut params = BTreeMap::new();
    match dict.remove(KEY_PARAMETERS) {
        None => {}
        Some(PlistValue::Dict(entries)) => {
            for (k, v) in entries {
                params.insert(k, plist_to_param(v));
            }
        }
        Some(_) => {
            return Err(IngestError::Schema(format!(
                "action {index} {KEY_PARAMETERS} is not a dictionary"
            )));
        }
    }

    let control_flow_mode = match params.remove(KEY_CONTROL_FLOW_MODE) {
        None => None,
        Some(ParamValue::Integer(m @ 0..=2)) => Some(m as u8),
        Some(other) => {
            return Err(IngestError::Schema(format!(
                "action {index} has invalid {KEY_CONTROL_FLOW_MODE} {other:?}"
            )));
        }
    };
    let grouping_id = match params.remove(KEY_GROUPING) {
        None => None,
        Some(ParamValue::Text(s)) => Some(s),
        Some(_) => {
            return Err(IngestError::Schema(format!(
                "action {index} {KEY_GROUPING} is not a string"
            )));
        }
    };
    let uuid = match params.remove(KEY_UUID) {
        None => None,
        Some(ParamValue::Text(s)) => Some(s),
        Some(_) => {
            return Err(IngestError::Schema(format!("action {index} {KEY_UUID} is not a string")));
        }
    };
    if control_flow_mode.is_some() && grouping_id.is_none() {
        return Err(IngestError::Schema(format!(
            "action {index} has {KEY_CONTROL_FLOW_MODE} but no {KEY_GROUPING}"
        )));
    }

    Ok(RawAction { identifier, params, control_flow_mode, grouping_id, uuid })
}

fn plist_to_param(value: PlistValue) -> ParamValue {
    match value {
        PlistValue::String(s) => ParamValue::Text(s),
        PlistValue::Integer(i) => ParamValue::Integer(i),
        PlistValue::Real(r) => ParamValue::Real(r),
        PlistValue::Bool(b) => ParamValue::Bool(b),
        PlistValue::Data(d) => ParamValue::Binary(BinaryBlob { data: d }),
        PlistValue::Date(s) => ParamValue::Text(s),
        PlistValue::Array(items) => {
            ParamValue::List(items.into_iter().map(plist_to_param).collect())
        }
        PlistValue::Dict(entries) => match try_attachment(&entries) {
            Some(att) => ParamValue::Attachment(att),
            None => ParamValue::Map(
                entries.into_iter().map(|(k, v)| (k, plist_to_param(v))).collect(),
            ),
        },
    }
}

/// Recognize the conventional attachment shape
/// `{Value: {Type: ..., ...}, WFSerializationType: ...}`. Anything else stays
/// a plain map.
fn try_attachment(entries: &BTreeMap<String, PlistValue>) -> Option<Attachment> {
    if !entries.keys().all(|k| k == "Value" || k == "WFSerializationType") {
        return None;
    }
    let value = match entries.get("Value") {
        Some(PlistValue::Dict(d)) => d,
        _ => return None,
    };
    let kind = match value.get("Type") {
        Some(PlistValue::String(s)) => s.as_str(),
        _ => return None,
    };
    match kind {
        "ActionOutput" => {
            let output_uuid = match value.get("OutputUUID") {
                Some(PlistValue::String(s)) => s.clone(),
                _ => return None,
            };
            let output_name = match value.get("OutputName") {
                Some(PlistValue::String(s)) => Some(s.clone()),
                _ => None,
            };
            Some(Attachment::ActionOutput { output_uuid, output_name })
        }
        "Ask" => {
            let prompt = match value.get("Prompt") {
                Some(PlistValue::String(s)) => Some(s.clone()),
                _ => None,
            };
            Some(Attachment::Ask { prompt })
        }
        _ => None,
    }
}

/// Every (action index, top-level param key) whose value holds a binary blob
/// anywhere inside it. Empty result means the shortcut is transcription-safe.
pub fn scan_binary_params(s: &RawShortcut) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (index, action) in s.actions.iter().enumerate() {
        for (key, value) in &action.params {
            if contains_binary(value) {
                out.push((index, key.clone()));
            }
        }
    }
    out
}

fn contains_binary(value: &ParamValue) -> bool {
    match value {
        ParamValue::Binary(_) => true,
        ParamValue::List(items) => items.iter().any(contains_binary),
        ParamValue::Map(entries) => entries.values().any(contains_binary),
        _ => false,
    }
}

impl RawShortcut {
    /// Canonical JSON re-emission. Parsing the result yields a shortcut equal
    /// to `self` field by field.
    pub fn to_json(&self) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        if !self.client_version.is_empty() {
            root.insert(KEY_CLIENT_VERSION.into(), self.client_version.clone().into());
        }
        if !self.workflow_types.is_empty() {
            root.insert(
                KEY_TYPES.into(),
                serde_json::Value::Array(
                    self.workflow_types.iter().map(|t| t.clone().into()).collect(),
                ),
            );
        }
        root.insert(
            KEY_ACTIONS.into(),
            serde_json::Value::Array(self.actions.iter().map(action_to_json).collect()),
        );
        serde_json::Value::Object(root)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("shortcut JSON serializes")
    }
}

fn action_to_json(action: &RawAction) -> serde_json::Value {
    let mut params = serde_json::Map::new();
    for (k, v) in &action.params {
        params.insert(k.clone(), param_to_json(v));
    }
    if let Some(mode) = action.control_flow_mode {
        params.insert(KEY_CONTROL_FLOW_MODE.into(), serde_json::Value::from(mode));
    }
    if let Some(g) = &action.grouping_id {
        params.insert(KEY_GROUPING.into(), g.clone().into());
    }
    if let Some(u) = &action.uuid {
        params.insert(KEY_UUID.into(), u.clone().into());
    }

    let mut out = serde_json::Map::new();
    out.insert(KEY_IDENTIFIER.into(), action.identifier.clone().into());
    if !params.is_empty() {
        out.insert(KEY_PARAMETERS.into(), serde_json::Value::Object(params));
    }
    serde_json::Value::Object(out)
}

fn param_to_json(value: &ParamValue) -> serde_json::Value {
    match value {
        ParamValue::Text(s) => s.clone().into(),
        ParamValue::Integer(i) => (*i).into(),
        ParamValue::Bool(b) => (*b).into(),
        ParamValue::Real(r) => match serde_json::Number::from_f64(*r) {
            Some(n) => serde_json::Value::Number(n),
            // Non-finite reals cannot appear in the JSON form; degrade to text.
            None => format!("{r}").into(),
        },
        ParamValue::Binary(blob) => encode_bytes_literal(&blob.data).into(),
        ParamValue::List(items) => {
            serde_json::Value::Array(items.iter().map(param_to_json).collect())
        }
        ParamValue::Map(entries) => {
            let mut out = serde_json::Map::new();
            for (k, v) in entries {
                out.insert(k.clone(), param_to_json(v));
            }
            serde_json::Value::Object(out)
        }
        ParamValue::Attachment(att) => attachment_to_json(att),
    }
}

fn attachment_to_json(att: &Attachment) -> serde_json::Value {
    let mut value = serde_json::Map::new();
    match att {
        Attachment::ActionOutput { output_uuid, output_name } => {
            if let Some(name) = output_name {
                value.insert("OutputName".into(), name.clone().into());
            }
            value.insert("OutputUUID".into(), output_uuid.clone().into());
            value.insert("Type".into(), "ActionOutput".into());
        }
        Attachment::Ask { prompt } => {
            if let Some(p) = prompt {
                value.insert("Prompt".into(), p.clone().into());
            }
            value.insert("Type".into(), "Ask".into());
        }
    }
    let mut out = serde_json::Map::new();
    out.insert("Value".into(), serde_json::Value::Object(value));
    out.insert("WFSerializationType".into(), "WFTextTokenAttachment".into());
    serde_json::Value::Object(out)
}

/// JSON documents encode plist `<data>` payloads as Python-style bytes
/// literals (`b'...'`). A text param that happens to match the shape aliases
/// with a blob; the JSON form cannot distinguish the two.
fn decode_bytes_literal(s: &str) -> Option<Vec<u8>> {
    let body = s
        .strip_prefix("b'")
        .and_then(|rest| rest.strip_suffix('\''))
        .or_else(|| s.strip_prefix("b\"").and_then(|rest| rest.strip_suffix('"')))?;
    let mut out = Vec::with_capacity(body.len());
    let mut bytes = body.bytes().peekable();
    while let Some(b) = bytes.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        match bytes.next() {
            Some(b'n') => out.push(b'\n'),
            Some(b'r') => out.push(b'\r'),
            Some(b't') => out.push(b'\t'),
            Some(b'0') => out.push(0),
            Some(b'\\') => out.push(b'\\'),
            Some(b'\'') => out.push(b'\''),
            Some(b'"') => out.push(b'"'),
            Some(b'x') => {
                let hi = bytes.next()?;
                let lo = bytes.next()?;
                let hex = [hi, lo];
                let text = std::str::from_utf8(&hex).ok()?;
                out.push(u8::from_str_radix(text, 16).ok()?);
            }
            Some(other) => {
                out.push(b'\\');
                out.push(other);
            }
            None => return None,
        }
    }
    Some(out)
}

fn encode_bytes_literal(data: &[u8]) -> String {
    let mut s = String::from("b'");
    for &b in data {
        match b {
            b'\\' => s.push_str("\\\\"),
            b'\'' => s.push_str("\\'"),
            b'\n' => s.push_str("\\n"),
            b'\r' => s.push_str("\\r"),
            b'\t' => s.push_str("\\t"),
            0x20..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\x{b:02x}")),
        }
    }
    s.push('\'');
    s
}
