//! Test support: an in-process SPARQL endpoint backed by an in-memory store,
//! plus paths to the shared fixture files.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Form, Router};
use oxigraph::io::RdfFormat;
use oxigraph::model::NamedNode;
use oxigraph::sparql::results::{QueryResultsFormat, QueryResultsSerializer};
use oxigraph::sparql::{
    QueryEvaluationError, QueryResults, QuerySolutionIter, ServiceHandler, SparqlEvaluator,
};
use oxigraph::store::Store;
use parking_lot::Mutex;
use serde::Deserialize;
use spargebra::algebra::GraphPattern;
use tokio::sync::oneshot;

/// Directory holding the shared fixture files.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

pub fn read_fixture(name: &str) -> String {
    let path = fixture_path(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// Store loaded from the named fixture files (`.ttl` or `.trig`).
pub fn store_from_fixtures(names: &[&str]) -> Store {
    let store = Store::new().expect("in-memory store");
    for name in names {
        let format = if name.ends_with(".trig") { RdfFormat::TriG } else { RdfFormat::Turtle };
        store
            .load_from_slice(format, read_fixture(name).as_bytes())
            .unwrap_or_else(|e| panic!("fixture {name} does not parse: {e}"));
    }
    store
}

/// Store loaded from Turtle text.
pub fn store_from_turtle(turtle: &str) -> Store {
    let store = Store::new().expect("in-memory store");
    store.load_from_slice(RdfFormat::Turtle, turtle.as_bytes()).expect("fixture Turtle parses");
    store
}

#[derive(Default)]
struct Faults {
    fail_next: AtomicU32,
    fail_status: AtomicU32,
    delay_ms: AtomicU64,
}

struct Shared {
    store: Store,
    services: HashMap<String, Store>,
    queries: AtomicU64,
    log: Mutex<Vec<String>>,
    faults: Faults,
}

/// A SPARQL endpoint on `127.0.0.1` answering `GET`/`POST /sparql`.
/// `SERVICE` calls to registered IRIs are answered by the matching store.
/// Shuts down when dropped.
pub struct FixtureEndpoint {
    pub url: String,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
}

pub struct FixtureEndpointBuilder {
    store: Store,
    services: HashMap<String, Store>,
}

impl FixtureEndpointBuilder {
    /// Answers `SERVICE <iri>` blocks with `store`.
    pub fn service(mut self, iri: &str, store: Store) -> Self {
        self.services.insert(iri.to_string(), store);
        self
    }

    pub async fn start(self) -> FixtureEndpoint {
        let shared = Arc::new(Shared {
            store: self.store,
            services: self.services,
            queries: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
            faults: Faults::default(),
        });
        let app = Router::new()
            .route("/sparql", get(handle_get).post(handle_post))
            .with_state(shared.clone());
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0)))
            .await
            .expect("bind fixture endpoint");
        let addr = listener.local_addr().expect("local addr");
        let (tx, rx) = oneshot::channel::<()>();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        FixtureEndpoint { url: format!("http://{addr}/sparql"), shared, shutdown: Some(tx) }
    }
}

impl FixtureEndpoint {
    pub fn builder(store: Store) -> FixtureEndpointBuilder {
        FixtureEndpointBuilder { store, services: HashMap::new() }
    }

    pub async fn start(store: Store) -> Self {
        Self::builder(store).start().await
    }

    pub async fn from_turtle(turtle: &str) -> Self {
        Self::start(store_from_turtle(turtle)).await
    }

    pub fn store(&self) -> &Store {
        &self.shared.store
    }

    /// Queries received, failed ones included.
    pub fn queries_received(&self) -> u64 {
        self.shared.queries.load(Ordering::SeqCst)
    }

    pub fn query_log(&self) -> Vec<String> {
        self.shared.log.lock().clone()
    }

    /// The next `n` requests answer with `status` and no result.
    pub fn fail_next(&self, n: u32, status: u16) {
        self.shared.faults.fail_status.store(status as u32, Ordering::SeqCst);
        self.shared.faults.fail_next.store(n, Ordering::SeqCst);
    }

    /// Every request waits this long before answering.
    pub fn set_delay(&self, delay: Duration) {
        self.shared.faults.delay_ms.store(delay.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Drop for FixtureEndpoint {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

#[derive(Deserialize)]
struct QueryParams {
    query: Option<String>,
}

async fn handle_get(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    Query(params): Query<QueryParams>,
) -> Response {
    respond(shared, headers, params.query).await
}

async fn handle_post(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    Form(params): Form<QueryParams>,
) -> Response {
    respond(shared, headers, params.query).await
}

async fn respond(shared: Arc<Shared>, headers: HeaderMap, query: Option<String>) -> Response {
    shared.queries.fetch_add(1, Ordering::SeqCst);
    let delay = shared.faults.delay_ms.load(Ordering::SeqCst);
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    let Some(query) = query else {
        return (StatusCode::BAD_REQUEST, "missing query parameter").into_response();
    };
    shared.log.lock().push(query.clone());
    let failing = shared
        .faults
        .fail_next
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if failing {
        let status = StatusCode::from_u16(shared.faults.fail_status.load(Ordering::SeqCst) as u16)
            .unwrap_or(StatusCode::SERVICE_UNAVAILABLE);
        return (status, "injected failure").into_response();
    }
    let wants_json = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_none_or(|a| !a.contains("n-triples"));
    let result = tokio::task::spawn_blocking(move || evaluate(&shared, &query)).await;
    match result {
        Ok(Ok(Body::Json(bytes))) => {
            ([(header::CONTENT_TYPE, "application/sparql-results+json")], bytes).into_response()
        }
        Ok(Ok(Body::NTriples(text))) if !wants_json => {
            ([(header::CONTENT_TYPE, "application/n-triples")], text).into_response()
        }
        Ok(Ok(Body::NTriples(_))) => {
            (StatusCode::NOT_ACCEPTABLE, "graph results are only served as N-Triples").into_response()
        }
        Ok(Err((status, message))) => (status, message).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

enum Body {
    Json(Vec<u8>),
    NTriples(String),
}

fn evaluate(shared: &Shared, query: &str) -> Result<Body, (StatusCode, String)> {
    let mut evaluator = SparqlEvaluator::new();
    for (iri, store) in &shared.services {
        let name = NamedNode::new(iri.as_str()).map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
        evaluator = evaluator.with_service_handler(name, StoreService(store.clone()));
    }
    let prepared = evaluator.parse_query(query).map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
    let results = prepared
        .on_store(&shared.store)
        .execute()
        .map_err(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let internal = |e: &dyn std::fmt::Display| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    match results {
        QueryResults::Boolean(b) => {
            let mut out = Vec::new();
            QueryResultsSerializer::from_format(QueryResultsFormat::Json)
                .serialize_boolean_to_writer(&mut out, b)
                .map_err(|e| internal(&e))?;
            Ok(Body::Json(out))
        }
        QueryResults::Solutions(solutions) => {
            let mut writer = QueryResultsSerializer::from_format(QueryResultsFormat::Json)
                .serialize_solutions_to_writer(Vec::new(), solutions.variables().to_vec())
                .map_err(|e| internal(&e))?;
            for solution in solutions {
                let solution = solution.map_err(|e| internal(&e))?;
                writer.serialize(&solution).map_err(|e| internal(&e))?;
            }
            Ok(Body::Json(writer.finish().map_err(|e| internal(&e))?))
        }
        QueryResults::Graph(triples) => {
            let mut out = String::new();
            for t in triples {
                let t = t.map_err(|e| internal(&e))?;
                out.push_str(&format!("{t} .\n"));
            }
            Ok(Body::NTriples(out))
        }
    }
}

struct StoreService(Store);

impl ServiceHandler for StoreService {
    type Error = QueryEvaluationError;

    fn handle(
        &self,
        pattern: &GraphPattern,
        _base_iri: Option<&oxiri::Iri<String>>,
    ) -> Result<QuerySolutionIter<'static>, Self::Error> {
        let query = format!("SELECT * WHERE {{ {pattern} }}");
        let prepared = SparqlEvaluator::new()
            .parse_query(&query)
            .map_err(|e| QueryEvaluationError::Service(Box::new(e)))?;
        match prepared.on_store(&self.0).execute()? {
            QueryResults::Solutions(s) => Ok(s),
            _ => unreachable!("SELECT yields solutions"),
        }
    }
}

/// Store loaded from TriG text, named graphs included.
pub fn store_from_trig(trig: &str) -> Store {
    let store = Store::new().expect("in-memory store");
    store.load_from_slice(RdfFormat::TriG, trig.as_bytes()).expect("fixture TriG parses");
    store
}
