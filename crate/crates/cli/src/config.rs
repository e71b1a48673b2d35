//! Pipeline configuration: model endpoint, sampling defaults, and the
//! workflow category list. Loaded from TOML or JSON; every field has a
//! default so an empty file is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use flowforge_core::metrics::DEFAULT_WEIGHTS;
use flowforge_core::registry::DEFAULT_BUILTIN_APP;
use flowforge_gateway::DEFAULT_MAX_INFLIGHT;

/// Workflow categories accepted by `expand`. Seeded with the common
/// app-store taxonomy; edit the config file to change it.
pub const DEFAULT_CATEGORIES: [&str; 28] = [
    "Books",
    "Business",
    "Catalogs",
    "Developer Tools",
    "Education",
    "Entertainment",
    "Finance",
    "Food & Drink",
    "Games",
    "Graphics & Design",
    "Health & Fitness",
    "Kids",
    "Lifestyle",
    "Magazines & Newspapers",
    "Medical",
    "Music",
    "Navigation",
    "News",
    "Photo & Video",
    "Productivity",
    "Reference",
    "Shopping",
    "Social Networking",
    "Sports",
    "Stickers",
    "Travel",
    "Utilities",
    "Weather",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: String,
    pub base_url: String,
    /// Environment variable holding the API key; never the key itself.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub max_inflight: usize,
    pub max_retries: usize,
    pub initial_backoff_ms: u64,
    pub timeout_s: u64,
    /// In-context examples for query synthesis, clamped to 1..=3.
    pub icl_examples: usize,
    pub n_apis: usize,
    pub weights: [f64; 4],
    pub builtin_app_id: String,
    /// Worker threads for batch commands; 0 means one per CPU.
    pub workers: usize,
    pub categories: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: "gpt-4o-mini".to_string(),
            base_url: "https://api.openai.com/v1".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            temperature: 0.0,
            max_tokens: None,
            max_inflight: DEFAULT_MAX_INFLIGHT,
            max_retries: 3,
            initial_backoff_ms: 500,
            timeout_s: 120,
            icl_examples: 2,
            n_apis: 6,
            weights: DEFAULT_WEIGHTS,
            builtin_app_id: DEFAULT_BUILTIN_APP.to_string(),
            workers: 0,
            categories: DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PipelineConfig {
    /// Load from a TOML or JSON file, decided by extension; no path means
    /// the built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else { return Ok(PipelineConfig::default()) };
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        let json = path.extension().and_then(|e| e.to_str()) == Some("json");
        if json {
            serde_json::from_str(&text)
                .map_err(|e| ConfigError::Parse { path: shown, message: e.to_string() })
        } else {
            toml::from_str(&text)
                .map_err(|e| ConfigError::Parse { path: shown, message: e.to_string() })
        }
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            return self.workers;
        }
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}
