//! Pipeline driver for the workflow corpus: transcription of recorded
//! shortcuts into the DSL, thought and query backfill, seeded API
//! sampling for query expansion, refinement, rule-based validation,
//! corpus statistics, metric scoring, and judged pass rates.
//!
//! The `flowforge` binary fronts these as subcommands; the library
//! surface exists so integration tests can drive the same code paths.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod pool;
pub mod sampling;

pub use commands::CliError;
pub use config::PipelineConfig;
pub use corpus::{CorpusStats, WorkflowSample};
pub use sampling::{sample_apis, SampledApis, SamplingConfig};
