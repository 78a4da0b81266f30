//! Service configuration, read from TOML. Secrets are never stored in the
//! file: it names environment variables that hold them.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparqlgen_core::eval::Prices;
use sparqlgen_core::harvest::VoidMode;
use sparqlgen_core::pipeline::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub pipeline: PipelineConfig,
    pub index: IndexConfig,
    pub harvest: HarvestConfig,
    pub llm: LlmConfig,
    pub embeddings: EmbeddingConfig,
    pub prices: Prices,
    pub endpoints: Vec<EndpointConfig>,
    pub datasets: Vec<DatasetBinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    /// Turns (on /ask and /chat together) running at once.
    pub max_concurrent_turns: usize,
    /// Provider calls in flight at once, across all turns.
    pub max_concurrent_llm_calls: usize,
    /// Environment variable holding the bearer token for /admin routes.
    /// Admin routes reject every request when it is unset.
    pub admin_token_env: String,
    /// File receiving one JSON line per turn; `-` for stdout.
    pub turn_log: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".into(),
            max_concurrent_turns: 16,
            max_concurrent_llm_calls: 8,
            admin_token_env: "SPARQLGEN_ADMIN_TOKEN".into(),
            turn_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub schema_fraction: f64,
    pub batch_size: usize,
    /// Where `sparqlgen index` writes the vector index.
    pub dir: PathBuf,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig { schema_fraction: 1.0, batch_size: 64, dir: PathBuf::from("data/index") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub cache_dir: PathBuf,
    pub preferred_language: String,
    pub void_mode: VoidMode,
    pub sample_limit: usize,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            cache_dir: PathBuf::from("data/harvest"),
            preferred_language: "en".into(),
            void_mode: VoidMode::Sampled,
            sample_limit: 100,
            timeout_ms: 120_000,
            retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmConfig {
    /// Any server speaking the OpenAI chat completions protocol.
    Openai {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        structured_output: bool,
    },
    /// Replays a recorded transcript, one call after another.
    Scripted { transcript: PathBuf },
    /// Answers each corpus question with its reference query.
    Echo { corpus: PathBuf },
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig::Openai {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            structured_output: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Openai {
        base_url: String,
        model: String,
        dimension: usize,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        multilingual: bool,
    },
    /// Deterministic hashed embeddings, for tests and offline runs.
    Mock { dimension: usize, seed: u64 },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Mock { dimension: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    /// Send queries for `url` here instead, e.g. a local mirror.
    #[serde(default)]
    pub route: Option<String>,
}

/// A dataset name exposed on the API, bound to a home endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBinding {
    pub id: String,
    pub endpoint_url: String,
    #[serde(default)]
    pub k_examples: Option<usize>,
    #[serde(default)]
    pub k_classes: Option<usize>,
    #[serde(default)]
    pub schema_fraction: Option<f64>,
    #[serde(default)]
    pub max_revisions: Option<usize>,
}

impl DatasetBinding {
    pub fn new(id: impl Into<String>, endpoint_url: impl Into<String>) -> Self {
        DatasetBinding {
            id: id.into(),
            endpoint_url: endpoint_url.into(),
            k_examples: None,
            k_classes: None,
            schema_fraction: None,
            max_revisions: None,
        }
    }

    pub fn pipeline_config(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        c.k_examples = self.k_examples.unwrap_or(c.k_examples);
        c.k_classes = self.k_classes.unwrap_or(c.k_classes);
        c.max_revisions = self.max_revisions.unwrap_or(c.max_revisions);
        c
    }

    pub fn schema_fraction(&self, index: &IndexConfig) -> f64 {
        self.schema_fraction.unwrap_or(index.schema_fraction)
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let endpoints: BTreeSet<&str> = self.endpoints.iter().map(|e| e.url.as_str()).collect();
        if endpoints.len() != self.endpoints.len() {
            return invalid("an endpoint is listed twice".into());
        }
        let mut ids = BTreeSet::new();
        for d in &self.datasets {
            if d.id.trim().is_empty() {
                return invalid("dataset id must not be empty".into());
            }
            if !ids.insert(d.id.as_str()) {
                return invalid(format!("dataset {:?} is defined twice", d.id));
            }
            if !endpoints.contains(d.endpoint_url.as_str()) {
                return invalid(format!("dataset {:?} names unknown endpoint {}", d.id, d.endpoint_url));
            }
            if let Some(f) = d.schema_fraction {
                if !(f > 0.0 && f <= 1.0) {
                    return invalid(format!("dataset {:?}: schema_fraction must be in (0, 1]", d.id));
                }
            }
        }
        let f = self.index.schema_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return invalid("index.schema_fraction must be in (0, 1]".into());
        }
        if self.server.max_concurrent_turns == 0 || self.server.max_concurrent_llm_calls == 0 {
            return invalid("concurrency limits must be at least 1".into());
        }
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetBinding> {
        self.datasets.iter().find(|d| d.id == id)
    }
}

/// Reads an optional secret from the named environment variable.
pub fn secret_from_env(var: Option<&str>) -> Result<Option<String>, ConfigError> {
    match var {
        None => Ok(None),
        Some(v) => std::env::var(v).map(Some).map_err(|_| ConfigError::MissingEnv(v.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[server]
bind = "0.0.0.0:9000"
max_concurrent_turns = 4

[pipeline]
k_examples = 5

[llm]
provider = "openai"
base_url = "http://localhost:11434/v1"
model = "llama3"

[embeddings]
provider = "mock"
dimension = 64
seed = 1

[prices]
input_per_million = 2.5
output_per_million = 10.0

[[endpoints]]
url = "https://sparql.uniprot.org/sparql"
label = "UniProt"

[[endpoints]]
url = "https://www.bgee.org/sparql/"

[[datasets]]
id = "uniprot"
endpoint_url = "https://sparql.uniprot.org/sparql"
k_classes = 3
"#;

    #[test]
    fn example_config_is_valid() {
        let c: Config = toml::from_str(include_str!("../../../sparqlgen.example.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.datasets.len(), 2);
    }

    #[test]
    fn parses_sample() {
        let c: Config = toml::from_str(SAMPLE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.server.max_concurrent_turns, 4);
        assert_eq!(c.server.max_concurrent_llm_calls, 8);
        assert_eq!(c.pipeline.k_examples, 5);
        assert_eq!(c.pipeline.max_revisions, 3);
        assert_eq!(c.embeddings, EmbeddingConfig::Mock { dimension: 64, seed: 1 });
        let d = c.dataset("uniprot").unwrap();
        let p = d.pipeline_config(&c.pipeline);
        assert_eq!((p.k_examples, p.k_classes), (5, 3));
        assert_eq!(d.schema_fraction(&c.index), 1.0);
    }

    #[test]
    fn rejects_unknown_endpoints_and_duplicates() {
        let mut c: Config = toml::from_str(SAMPLE).unwrap();
        c.datasets.push(DatasetBinding::new("uniprot", "https://sparql.uniprot.org/sparql"));
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        c.datasets.pop();
        c.datasets.push(DatasetBinding::new("x", "http://nowhere/sparql"));
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(toml::from_str::<Config>("[server]\nbnd = \"x\"").is_err());
    }
}
