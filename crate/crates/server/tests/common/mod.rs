#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde_json::{json, Value};
use sparqlgen_core::client::{ClientOptions, SparqlClient};
use sparqlgen_core::eval::parse_corpus;
use sparqlgen_core::harvest::{
    EndpointDescriptor, HarvestRecord, HarvestedExamples, MetadataStatus, QueryExample, RawVoidRecord, VoidSource,
};
use sparqlgen_core::llm::{FnLlm, LlmProvider, PromptKind};
use sparqlgen_core::pipeline::{HttpExecutor, SparqlExecutor};
use sparqlgen_core::retrieval::mock_provider;
use sparqlgen_server::config::{Config, DatasetBinding, EmbeddingConfig, EndpointConfig};
use sparqlgen_server::state::{AppState, Providers, SourceError, SourceProvider};
use sparqlgen_server::router;
use sparqlgen_testkit::{read_fixture, store_from_fixtures, FixtureEndpoint};

pub const UNIPROT: &str = "https://sparql.uniprot.org/sparql";
pub const BGEE: &str = "https://www.bgee.org/sparql/";
pub const ADMIN_TOKEN: &str = "s3cret";

pub fn examples(fixture: &str) -> Vec<QueryExample> {
    parse_corpus(&read_fixture(fixture)).unwrap()
}

pub fn schema() -> BTreeMap<String, Vec<RawVoidRecord>> {
    serde_json::from_str(&read_fixture("bio_schema.json")).unwrap()
}

pub fn record(endpoint: &str, examples: Vec<QueryExample>) -> HarvestRecord {
    let void = schema().remove(endpoint).unwrap_or_default();
    let mut descriptor = EndpointDescriptor::new(endpoint);
    descriptor.metadata_status =
        MetadataStatus { has_examples: !examples.is_empty(), has_void: !void.is_empty(), has_description: false };
    HarvestRecord {
        endpoint: descriptor,
        examples: HarvestedExamples { usable: examples, quarantined: Vec::new() },
        void,
        void_source: VoidSource::Published,
        harvested_at: 1_700_000_000,
    }
}

/// Harvest records held in memory. Every refresh returns the current
/// record with a later timestamp, after `delay`.
pub struct StaticSources {
    records: Mutex<BTreeMap<String, HarvestRecord>>,
    clock: AtomicU64,
    pub delay: Mutex<Duration>,
    pub fetches: AtomicU64,
}

impl StaticSources {
    pub fn new(records: Vec<HarvestRecord>) -> Arc<Self> {
        Arc::new(StaticSources {
            records: Mutex::new(records.into_iter().map(|r| (r.endpoint.endpoint_url.clone(), r)).collect()),
            clock: AtomicU64::new(1_700_000_000),
            delay: Mutex::new(Duration::ZERO),
            fetches: AtomicU64::new(0),
        })
    }

    pub fn set(&self, record: HarvestRecord) {
        self.records.lock().insert(record.endpoint.endpoint_url.clone(), record);
    }
}

#[async_trait]
impl SourceProvider for StaticSources {
    async fn fetch(&self, endpoint: &EndpointDescriptor, refresh: bool) -> Result<HarvestRecord, SourceError> {
        self.fetches.fetch_add(1, Ordering::SeqCst);
        let delay = *self.delay.lock();
        if refresh && !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        let mut record = self.records.lock().get(&endpoint.endpoint_url).cloned().ok_or_else(|| SourceError {
            endpoint: endpoint.endpoint_url.clone(),
            message: "not harvested".into(),
        })?;
        if refresh {
            record.harvested_at = self.clock.fetch_add(60, Ordering::SeqCst) + 60;
        }
        Ok(record)
    }
}

pub fn config() -> Config {
    let mut c = Config::default();
    c.server.max_concurrent_turns = 256;
    c.embeddings = EmbeddingConfig::Mock { dimension: 64, seed: 7 };
    c.endpoints = vec![
        EndpointConfig {
            url: UNIPROT.into(),
            label: Some("UniProt".into()),
            description: Some("Protein sequences and functional annotation.".into()),
            route: None,
        },
        EndpointConfig {
            url: BGEE.into(),
            label: Some("Bgee".into()),
            description: Some("Gene expression across animal anatomy.".into()),
            route: None,
        },
    ];
    c.datasets = vec![DatasetBinding::new("uniprot", UNIPROT)];
    c
}

/// An executor that can reach nothing.
pub fn dead_executor() -> HttpExecutor {
    let client = SparqlClient::new(ClientOptions { retries: 0, timeout: Duration::from_secs(2), ..Default::default() });
    HttpExecutor::new(client).route(UNIPROT, "http://127.0.0.1:9/sparql")
}

pub fn executor_for(endpoint: &FixtureEndpoint) -> HttpExecutor {
    let client = SparqlClient::new(ClientOptions { retries: 0, ..Default::default() });
    HttpExecutor::new(client).route(UNIPROT, endpoint.url.clone())
}

pub async fn bio_endpoint() -> FixtureEndpoint {
    FixtureEndpoint::builder(store_from_fixtures(&["uniprot_mini.ttl"]))
        .service(BGEE, store_from_fixtures(&["bgee_mini.ttl"]))
        .start()
        .await
}

pub fn bio_sources() -> Arc<StaticSources> {
    StaticSources::new(vec![record(UNIPROT, examples("bio_conformant.jsonl")), record(BGEE, Vec::new())])
}

pub fn state(
    llm: Arc<dyn LlmProvider>,
    executor: Arc<dyn SparqlExecutor>,
    sources: Arc<StaticSources>,
) -> AppState {
    let providers = Providers { llm, embedder: Arc::new(mock_provider(64, 7)), executor, sources };
    AppState::new(config(), providers).with_admin_token(Some(ADMIN_TOKEN.into()))
}

pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
    pub http: reqwest::Client,
}

impl Server {
    pub async fn start(state: AppState) -> Self {
        let state = Arc::new(state);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = router(state.clone());
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server { base, state, http: reqwest::Client::new() }
    }

    pub async fn indexed(state: AppState) -> Self {
        let server = Server::start(state).await;
        server.state.index_all(false).await.unwrap();
        server
    }

    pub async fn ask(&self, dataset: &str, question: &str) -> (u16, Option<u64>, Value) {
        let response = self
            .http
            .get(format!("{}/v1/ask", self.base))
            .query(&[("dataset", dataset), ("question", question)])
            .send()
            .await
            .unwrap();
        let status = response.status().as_u16();
        let generation = response
            .headers()
            .get("x-index-generation")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        (status, generation, response.json().await.unwrap())
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let response = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (response.status().as_u16(), response.json().await.unwrap())
    }

    pub async fn reindex(&self, dataset: &str, token: Option<&str>) -> (u16, Value) {
        let mut request =
            self.http.post(format!("{}/v1/admin/reindex", self.base)).json(&serde_json::json!({ "dataset": dataset }));
        if let Some(t) = token {
            request = request.bearer_auth(t);
        }
        let response = request.send().await.unwrap();
        (response.status().as_u16(), response.json().await.unwrap())
    }

    /// Posts to /v1/chat and returns the status and the (event, data) pairs.
    pub async fn chat(&self, body: Value) -> (u16, Vec<(String, Value)>) {
        let response = self.http.post(format!("{}/v1/chat", self.base)).json(&body).send().await.unwrap();
        let status = response.status().as_u16();
        let text = response.text().await.unwrap();
        if status != 200 {
            return (status, vec![("http_error".into(), serde_json::from_str(&text).unwrap())]);
        }
        (status, parse_sse(&text))
    }

    pub async fn wait_for_reindex(&self) {
        for _ in 0..500 {
            if self.state.reindex_in_flight().is_empty() {
                return;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("reindex did not finish");
    }
}

pub fn parse_sse(text: &str) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let mut event = None;
        let mut data = String::new();
        for line in block.lines() {
            if let Some(e) = line.strip_prefix("event:") {
                event = Some(e.trim().to_string());
            } else if let Some(d) = line.strip_prefix("data:") {
                data.push_str(d.strip_prefix(' ').unwrap_or(d));
            }
        }
        if let Some(event) = event {
            out.push((event, serde_json::from_str(&data).unwrap()));
        }
    }
    out
}

/// Answers with `SELECT ?vN` where N names the example set visible in the
/// prompt, so a response reveals which index produced it.
pub fn generation_revealing_llm() -> FnLlm {
    FnLlm::new("revealing", |p| {
        Ok(match p.kind {
            PromptKind::Decompose => json!({ "sub_questions": [p.question], "concepts": [] }).to_string(),
            _ => {
                let v1 = p.text.contains("marker-v1");
                let v2 = p.text.contains("marker-v2");
                let var = match (v1, v2) {
                    (true, false) => "v1",
                    (false, true) => "v2",
                    _ => "mixed",
                };
                format!("```sparql\nSELECT ?{var} WHERE {{ ?{var} a <http://purl.uniprot.org/core/Protein> }}\n```")
            }
        })
    })
}

pub fn marked_examples(marker: &str) -> Vec<sparqlgen_core::harvest::QueryExample> {
    examples("bio_conformant.jsonl")
        .into_iter()
        .map(|mut e| {
            e.question = format!("{} ({marker})", e.question);
            e
        })
        .collect()
}

/// The stage-order contract: decomposition, context, one or more
/// attempt/validation_report pairs numbered from 0, then either
/// final_query, results, interpretation, accounting or a trailing error,
/// and always done last.
pub fn assert_stage_order(events: &[(String, Value)]) {
    let n = names(events);
    assert_eq!(&n[..2], ["decomposition", "context"], "{n:?}");
    let mut i = 2;
    let mut attempt = 0;
    while n.get(i) == Some(&"attempt") {
        assert_eq!(n[i + 1], "validation_report", "{n:?}");
        assert_eq!(events[i].1["n"], attempt);
        assert_eq!(events[i + 1].1["n"], attempt);
        attempt += 1;
        i += 2;
    }
    assert!(attempt >= 1, "{n:?}");
    let rest = &n[i..];
    let ok: &[&[&str]] = &[
        &["final_query", "results", "interpretation", "accounting", "done"],
        &["final_query", "error", "done"],
        &["error", "done"],
    ];
    assert!(ok.contains(&rest), "{n:?}");
}

pub fn names(events: &[(String, Value)]) -> Vec<&str> {
    events.iter().map(|(n, _)| n.as_str()).collect()
}
