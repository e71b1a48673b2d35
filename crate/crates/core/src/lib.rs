//! Core library for turning property-list workflow files into Python-style
//! workflow code and measuring generated code against references.

pub mod ast;
pub mod emit;
pub mod fuzzgen;
pub mod ingest;
pub mod metrics;
pub mod naming;
pub mod registry;
pub mod validator;
pub mod wfdsl;
