//! API documentation records: load, save, query, and the built-in versus
//! third-party split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// App id whose actions count as built-in. Overridable per registry for
/// other ecosystems.
pub const DEFAULT_BUILTIN_APP: &str = "is.workflow.actions";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate api id {0:?}")]
    DuplicateApi(String),
    #[error("api ids {first:?} and {second:?} both map to function name {name:?}")]
    UnderscoreCollision { first: String, second: String, name: String },
    #[error("registry schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiParam {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<serde_json::Value>,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiDoc {
    /// Dotted action identifier, e.g. "is.workflow.actions.count".
    pub id: String,
    pub app_id: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub params: Vec<ApiParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_name: Option<String>,
}

impl ApiDoc {
    /// The name this API carries in code: dots become underscores.
    pub fn function_name(&self) -> String {
        self.id.replace('.', "_")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRegistry {
    docs: BTreeMap<String, ApiDoc>,
    /// app_id -> sorted ids; exact inverse of the docs' app_id fields.
    apps: BTreeMap<String, Vec<String>>,
    by_function: BTreeMap<String, String>,
    builtin_app: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    apis: Vec<ApiDoc>,
}

impl ApiRegistry {
    pub fn from_docs(list: Vec<ApiDoc>) -> Result<Self, RegistryError> {
        let mut docs = BTreeMap::new();
        let mut apps: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut by_function: BTreeMap<String, String> = BTreeMap::new();
        for doc in list {
            let mut seen = std::collections::BTreeSet::new();
            for p in &doc.params {
                if !seen.insert(p.name.as_str()) {
                    return Err(RegistryError::Schema(format!(
                        "api {:?} declares parameter {:?} twice",
                        doc.id, p.name
                    )));
                }
                if p.default.is_some() && p.required {
                    return Err(RegistryError::Schema(format!(
                        "api {:?} parameter {:?} has a default yet is marked required",
                        doc.id, p.name
                    )));
                }
            }
            let function = doc.function_name();
            if let Some(first) = by_function.get(&function) {
                if *first == doc.id {
                    return Err(RegistryError::DuplicateApi(doc.id));
                }
                return Err(RegistryError::UnderscoreCollision {
                    first: first.clone(),
                    second: doc.id,
                    name: function,
                });
            }
            by_function.insert(function, doc.id.clone());
            apps.entry(doc.app_id.clone()).or_default().push(doc.id.clone());
            docs.insert(doc.id.clone(), doc);
        }
        for ids in apps.values_mut() {
            ids.sort();
        }
        Ok(ApiRegistry { docs, apps, by_function, builtin_app: DEFAULT_BUILTIN_APP.to_string() })
    }

    pub fn set_builtin_app(&mut self, app_id: &str) {
        self.builtin_app = app_id.to_string();
    }

    pub fn builtin_app(&self) -> &str {
        &self.builtin_app
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ApiDoc> {
        self.docs.get(id)
    }

    pub fn docs(&self) -> impl Iterator<Item = &ApiDoc> {
        self.docs.values()
    }

    pub fn apps(&self) -> &BTreeMap<String, Vec<String>> {
        &self.apps
    }

    /// Resolve an underscore-form function name to its doc. Exact match only.
    pub fn lookup(&self, function_name: &str) -> Option<&ApiDoc> {
        self.by_function.get(function_name).and_then(|id| self.docs.get(id))
    }

    pub fn is_builtin(&self, doc: &ApiDoc) -> bool {
        doc.app_id == self.builtin_app
    }
}

pub fn load_registry(source: &str) -> Result<ApiRegistry, RegistryError> {
    let file: RegistryFile =
        serde_json::from_str(source).map_err(|e| RegistryError::Schema(e.to_string()))?;
    ApiRegistry::from_docs(file.apis)
}

/// Serialize with stable field and id order, ready for diffing.
pub fn save_registry(registry: &ApiRegistry) -> String {
    let file = RegistryFile { apis: registry.docs().cloned().collect() };
    let mut out = serde_json::to_string_pretty(&file).expect("registry serializes");
    out.push('\n');
    out
}
