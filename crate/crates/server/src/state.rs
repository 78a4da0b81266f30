//! Shared service state: the current index snapshot and the machinery that
//! builds and replaces it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use async_trait::async_trait;
use parking_lot::{Mutex, RwLock};
use sparqlgen_core::client::SparqlClient;
use sparqlgen_core::harvest::{harvest_endpoint, EndpointDescriptor, HarvestCache, HarvestOptions, HarvestRecord};
use sparqlgen_core::knowledge::{KnowledgeBase, KnowledgeError, KnowledgeSources};
use sparqlgen_core::llm::LlmProvider;
use sparqlgen_core::pipeline::{Pipeline, SparqlExecutor};
use sparqlgen_core::retrieval::EmbeddingProvider;
use tokio::sync::Semaphore;

use crate::config::{Config, DatasetBinding, EndpointConfig};
use crate::turnlog::TurnLog;

#[derive(Debug, Clone, thiserror::Error)]
#[error("{endpoint}: {message}")]
pub struct SourceError {
    pub endpoint: String,
    pub message: String,
}

/// Where harvest records come from.
#[async_trait]
pub trait SourceProvider: Send + Sync {
    /// The record for `endpoint`. With `refresh` the endpoint is harvested
    /// again; otherwise a stored record may be returned.
    async fn fetch(&self, endpoint: &EndpointDescriptor, refresh: bool) -> Result<HarvestRecord, SourceError>;
}

/// Harvests over the SPARQL protocol and keeps records in a [`HarvestCache`].
pub struct Harvester {
    pub client: SparqlClient,
    /// Endpoint IRI to the URL actually queried, as for [`HttpExecutor`](sparqlgen_core::pipeline::HttpExecutor).
    pub routes: BTreeMap<String, String>,
    pub cache: HarvestCache,
    pub options: HarvestOptions,
}

#[async_trait]
impl SourceProvider for Harvester {
    async fn fetch(&self, endpoint: &EndpointDescriptor, refresh: bool) -> Result<HarvestRecord, SourceError> {
        let err = |message: String| SourceError { endpoint: endpoint.endpoint_url.clone(), message };
        if !refresh {
            if let Some(record) = self.cache.load_latest(&endpoint.endpoint_url).map_err(|e| err(e.to_string()))? {
                return Ok(record);
            }
        }
        let record = match self.routes.get(&endpoint.endpoint_url) {
            None => harvest_endpoint(&self.client, endpoint, &self.options).await,
            Some(url) => {
                let mut routed = endpoint.clone();
                routed.endpoint_url = url.clone();
                harvest_endpoint(&self.client, &routed, &self.options).await.map(|mut r| {
                    r.endpoint.endpoint_url = endpoint.endpoint_url.clone();
                    for ex in &mut r.examples.usable {
                        if &ex.endpoint_url == url {
                            ex.endpoint_url = endpoint.endpoint_url.clone();
                        }
                    }
                    r
                })
            }
        }
        .map_err(|e| err(e.to_string()))?;
        self.cache.save(&record).map_err(|e| err(e.to_string()))?;
        Ok(record)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IndexBuildError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("indexing for dataset {dataset}: {source}")]
    Knowledge {
        dataset: String,
        #[source]
        source: KnowledgeError,
    },
}

/// A dataset's view of a snapshot.
#[derive(Clone)]
pub struct DatasetIndex {
    pub binding: DatasetBinding,
    pub pipeline: Pipeline,
    pub checksum: String,
}

impl DatasetIndex {
    pub fn knowledge(&self) -> &Arc<KnowledgeBase> {
        self.pipeline.knowledge()
    }
}

/// An immutable, fully built index. Requests hold an `Arc` to the
/// snapshot they started with, so a swap never changes an answer halfway.
pub struct Snapshot {
    pub generation: u64,
    /// Seconds since the Unix epoch.
    pub built_at: u64,
    /// Keyed by endpoint URL.
    pub records: BTreeMap<String, HarvestRecord>,
    pub datasets: BTreeMap<String, DatasetIndex>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// The providers a pipeline needs, shared by every snapshot.
#[derive(Clone)]
pub struct Providers {
    pub llm: Arc<dyn LlmProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub executor: Arc<dyn SparqlExecutor>,
    pub sources: Arc<dyn SourceProvider>,
}

pub fn descriptor(endpoint: &EndpointConfig) -> EndpointDescriptor {
    let mut d = EndpointDescriptor::new(&endpoint.url);
    if let Some(label) = &endpoint.label {
        d.label = label.clone();
    }
    if let Some(description) = &endpoint.description {
        d.description = description.clone();
    }
    d
}

/// Builds pipelines for every dataset from harvest records. Datasets with
/// the same schema fraction share one knowledge base.
pub async fn build_snapshot(
    config: &Config,
    providers: &Providers,
    llm_limit: &Arc<Semaphore>,
    records: BTreeMap<String, HarvestRecord>,
    generation: u64,
) -> Result<Snapshot, IndexBuildError> {
    let mut with_overrides: Vec<HarvestRecord> = Vec::new();
    for ep in &config.endpoints {
        if let Some(r) = records.get(&ep.url) {
            let mut r = r.clone();
            if let Some(label) = &ep.label {
                r.endpoint.label = label.clone();
            }
            if let Some(description) = &ep.description {
                r.endpoint.description = description.clone();
            }
            with_overrides.push(r);
        }
    }
    let sources = KnowledgeSources::from_records(&with_overrides);
    let mut by_fraction: BTreeMap<u64, Arc<KnowledgeBase>> = BTreeMap::new();
    let mut datasets = BTreeMap::new();
    for binding in &config.datasets {
        let fraction = binding.schema_fraction(&config.index);
        let kb = match by_fraction.get(&fraction.to_bits()) {
            Some(kb) => kb.clone(),
            None => {
                let kb = KnowledgeBase::build(&sources, providers.embedder.as_ref(), fraction, config.index.batch_size)
                    .await
                    .map_err(|source| IndexBuildError::Knowledge { dataset: binding.id.clone(), source })?;
                let kb = Arc::new(kb);
                by_fraction.insert(fraction.to_bits(), kb.clone());
                kb
            }
        };
        let checksum = kb.index.checksum();
        let pipeline = Pipeline::new(
            kb,
            providers.llm.clone(),
            providers.embedder.clone(),
            providers.executor.clone(),
            binding.pipeline_config(&config.pipeline),
        )
        .with_llm_limit(llm_limit.clone());
        datasets.insert(binding.id.clone(), DatasetIndex { binding: binding.clone(), pipeline, checksum });
    }
    Ok(Snapshot { generation, built_at: unix_now(), records, datasets })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReindexRejected {
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("a reindex of {0:?} is already running")]
    InFlight(String),
}

pub struct AppState {
    pub config: Config,
    providers: Providers,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    in_flight: Mutex<BTreeSet<String>>,
    last_error: Mutex<Option<String>>,
    rebuild: tokio::sync::Mutex<()>,
    llm_limit: Arc<Semaphore>,
    pub turn_limit: Arc<Semaphore>,
    pub admin_token: Option<String>,
    pub turn_log: Option<TurnLog>,
}

impl AppState {
    pub fn new(config: Config, providers: Providers) -> Self {
        let llm_limit = Arc::new(Semaphore::new(config.server.max_concurrent_llm_calls));
        let turn_limit = Arc::new(Semaphore::new(config.server.max_concurrent_turns));
        AppState {
            config,
            providers,
            snapshot: RwLock::new(None),
            in_flight: Mutex::new(BTreeSet::new()),
            last_error: Mutex::new(None),
            rebuild: tokio::sync::Mutex::new(()),
            llm_limit,
            turn_limit,
            admin_token: None,
            turn_log: None,
        }
    }

    pub fn with_admin_token(mut self, token: Option<String>) -> Self {
        self.admin_token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_turn_log(mut self, log: Option<TurnLog>) -> Self {
        self.turn_log = log;
        self
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().clone()
    }

    pub fn reindex_in_flight(&self) -> BTreeSet<String> {
        self.in_flight.lock().clone()
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.lock().clone()
    }

    /// Harvests (or loads) every configured endpoint, builds a snapshot and
    /// makes it current.
    pub async fn index_all(&self, refresh: bool) -> Result<Arc<Snapshot>, IndexBuildError> {
        let _guard = self.rebuild.lock().await;
        let mut records = BTreeMap::new();
        for ep in &self.config.endpoints {
            let record = self.providers.sources.fetch(&descriptor(ep), refresh).await?;
            records.insert(ep.url.clone(), record);
        }
        self.install(records).await
    }

    async fn install(&self, records: BTreeMap<String, HarvestRecord>) -> Result<Arc<Snapshot>, IndexBuildError> {
        let generation = self.snapshot().map_or(1, |s| s.generation + 1);
        let result = build_snapshot(&self.config, &self.providers, &self.llm_limit, records, generation).await;
        match result {
            Ok(snapshot) => {
                let snapshot = Arc::new(snapshot);
                *self.snapshot.write() = Some(snapshot.clone());
                *self.last_error.lock() = None;
                tracing::info!(generation, "index snapshot installed");
                Ok(snapshot)
            }
            Err(e) => {
                *self.last_error.lock() = Some(e.to_string());
                Err(e)
            }
        }
    }

    /// Re-harvests the dataset's endpoint and rebuilds in the background.
    /// Requests keep using the current snapshot until the new one is ready.
    pub fn start_reindex(self: &Arc<Self>, dataset: &str) -> Result<tokio::task::JoinHandle<()>, ReindexRejected> {
        let binding = self
            .config
            .dataset(dataset)
            .cloned()
            .ok_or_else(|| ReindexRejected::UnknownDataset(dataset.to_string()))?;
        if !self.in_flight.lock().insert(binding.id.clone()) {
            return Err(ReindexRejected::InFlight(binding.id));
        }
        let state = self.clone();
        Ok(tokio::spawn(async move {
            let outcome = state.reindex(&binding).await;
            if let Err(e) = &outcome {
                tracing::warn!(dataset = %binding.id, error = %e, "reindex failed");
                *state.last_error.lock() = Some(e.to_string());
            }
            state.in_flight.lock().remove(&binding.id);
        }))
    }

    async fn reindex(&self, binding: &DatasetBinding) -> Result<Arc<Snapshot>, IndexBuildError> {
        let _guard = self.rebuild.lock().await;
        let mut records = self.snapshot().map(|s| s.records.clone()).unwrap_or_default();
        for ep in &self.config.endpoints {
            let refresh = ep.url == binding.endpoint_url;
            if refresh || !records.contains_key(&ep.url) {
                let record = self.providers.sources.fetch(&descriptor(ep), refresh).await?;
                records.insert(ep.url.clone(), record);
            }
        }
        self.install(records).await
    }
}
