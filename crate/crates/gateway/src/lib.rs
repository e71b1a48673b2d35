//! Prompt assembly, chat transport, and response parsing for the
//! pipeline's model calls. The templates are embedded verbatim; rendering
//! only fills `{name}` placeholders. Transports are interchangeable: a
//! live OpenAI-compatible endpoint with retry and rate limiting, or a
//! canned mock keyed on prompt substrings for reproducible runs.

pub mod parse;
pub mod template;
pub mod transport;

pub use parse::{
    extract_json, parse_comment_map, parse_rename_map, parse_verdict, CommentMap,
    CommentParseError, RenameParseError, Verdict, VerdictParseError,
};
pub use template::{
    placeholders, render, template, PromptTemplate, TemplateError, TemplateName,
};
pub use transport::{
    ChatMessage, ChatRequest, ChatResponse, ChatTransport, Gateway, HttpConfig, HttpTransport,
    Limiter, MockRule, MockTransport, Role, TokenUsage, TransportError, DEFAULT_MAX_INFLIGHT,
};
