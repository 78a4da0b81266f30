//! Turns configuration into concrete providers.

use std::sync::Arc;
use std::time::Duration;

use sparqlgen_core::client::{ClientOptions, SparqlClient};
use sparqlgen_core::eval::{echo_reference_llm, load_corpus};
use sparqlgen_core::harvest::{HarvestCache, HarvestOptions, VoidOptions};
use sparqlgen_core::llm::{LlmProvider, OpenAiChat, ScriptedLlm, Transcript};
use sparqlgen_core::pipeline::HttpExecutor;
use sparqlgen_core::retrieval::{mock_provider, EmbeddingProvider, OpenAiEmbeddings};

use crate::config::{secret_from_env, Config, ConfigError, EmbeddingConfig, LlmConfig};
use crate::state::{Harvester, Providers};

pub fn llm(config: &LlmConfig) -> Result<Arc<dyn LlmProvider>, ConfigError> {
    Ok(match config {
        LlmConfig::Openai { base_url, model, api_key_env, structured_output } => {
            let key = secret_from_env(api_key_env.as_deref())?;
            Arc::new(OpenAiChat::new(base_url, model, key).structured_output(*structured_output))
        }
        LlmConfig::Scripted { transcript } => {
            let t = Transcript::from_file(transcript).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Arc::new(ScriptedLlm::new(t))
        }
        LlmConfig::Echo { corpus } => {
            let corpus = load_corpus(corpus).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Arc::new(echo_reference_llm(&corpus))
        }
    })
}

pub fn embedder(config: &EmbeddingConfig) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
    Ok(match config {
        EmbeddingConfig::Openai { base_url, model, dimension, api_key_env, multilingual } => {
            let key = secret_from_env(api_key_env.as_deref())?;
            Arc::new(OpenAiEmbeddings::new(base_url, model, key, *dimension).multilingual(*multilingual))
        }
        EmbeddingConfig::Mock { dimension, seed } => {
            if *dimension < 2 {
                return Err(ConfigError::Invalid("mock embeddings need at least 2 dimensions".into()));
            }
            Arc::new(mock_provider(*dimension, *seed))
        }
    })
}

pub fn sparql_client(config: &Config) -> SparqlClient {
    SparqlClient::new(ClientOptions {
        timeout: Duration::from_millis(config.harvest.timeout_ms),
        retries: config.harvest.retries,
        ..ClientOptions::default()
    })
}

/// Executor with every configured endpoint route applied.
pub fn executor(config: &Config) -> HttpExecutor {
    config.endpoints.iter().fold(HttpExecutor::new(sparql_client(config)), |ex, ep| match &ep.route {
        Some(url) => ex.route(&ep.url, url),
        None => ex,
    })
}

pub fn harvester(config: &Config) -> Harvester {
    let h = &config.harvest;
    Harvester {
        client: sparql_client(config),
        routes: config.endpoints.iter().filter_map(|e| Some((e.url.clone(), e.route.clone()?))).collect(),
        cache: HarvestCache::new(&h.cache_dir),
        options: HarvestOptions {
            preferred_language: h.preferred_language.clone(),
            void: VoidOptions { mode: h.void_mode, sample_limit: h.sample_limit, generate_when_missing: true },
        },
    }
}

pub fn from_config(config: &Config) -> Result<Providers, ConfigError> {
    Ok(Providers {
        llm: llm(&config.llm)?,
        embedder: embedder(&config.embeddings)?,
        executor: Arc::new(executor(config)),
        sources: Arc::new(harvester(config)),
    })
}
