use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::client::{ClientError, SparqlClient};
use crate::results::ResultSet;
use crate::sparql::{parse_query, QueryType};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("execution on {endpoint} failed: {message}")]
pub struct ExecutionError {
    pub endpoint: String,
    /// HTTP status, when the endpoint answered.
    pub status: Option<u16>,
    pub timed_out: bool,
    pub message: String,
}

impl From<ClientError> for ExecutionError {
    fn from(e: ClientError) -> Self {
        let endpoint = e.endpoint().to_string();
        let message = e.to_string();
        match e {
            ClientError::Http { status, .. } => ExecutionError { endpoint, status: Some(status), timed_out: false, message },
            ClientError::Timeout { .. } => ExecutionError { endpoint, status: None, timed_out: true, message },
            _ => ExecutionError { endpoint, status: None, timed_out: false, message },
        }
    }
}

/// Runs one query on one endpoint. Federation is left to the endpoint.
#[async_trait]
pub trait SparqlExecutor: Send + Sync {
    async fn run(&self, endpoint: &str, query: &str, query_type: QueryType) -> Result<ResultSet, ExecutionError>;
}

/// Executes over the SPARQL protocol. Routes send queries for an endpoint
/// IRI to another URL (a mirror or a local replica) without changing the
/// IRI the rest of the system sees.
#[derive(Debug)]
pub struct HttpExecutor {
    client: SparqlClient,
    routes: BTreeMap<String, String>,
}

impl HttpExecutor {
    pub fn new(client: SparqlClient) -> Self {
        HttpExecutor { client, routes: BTreeMap::new() }
    }

    pub fn route(mut self, endpoint: impl Into<String>, url: impl Into<String>) -> Self {
        self.routes.insert(endpoint.into(), url.into());
        self
    }

    pub fn client(&self) -> &SparqlClient {
        &self.client
    }
}

#[async_trait]
impl SparqlExecutor for HttpExecutor {
    async fn run(&self, endpoint: &str, query: &str, query_type: QueryType) -> Result<ResultSet, ExecutionError> {
        let url = self.routes.get(endpoint).map_or(endpoint, String::as_str);
        self.client.query(url, query, query_type).await.map_err(|e| {
            let mut e = ExecutionError::from(e);
            e.endpoint = endpoint.to_string();
            e
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionLimits {
    pub timeout: Duration,
    pub max_rows: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits { timeout: Duration::from_secs(60), max_rows: 1000 }
    }
}

/// Runs `query` on `home_endpoint`, clips the rows to `limits.max_rows` and
/// records the home endpoint and every SERVICE endpoint as the origin.
pub async fn execute(
    executor: &dyn SparqlExecutor,
    query: &str,
    home_endpoint: &str,
    limits: &ExecutionLimits,
) -> Result<ResultSet, ExecutionError> {
    let fail = |message: String, timed_out: bool| ExecutionError {
        endpoint: home_endpoint.to_string(),
        status: None,
        timed_out,
        message,
    };
    let parsed = parse_query(query).map_err(|e| fail(e.to_string(), false))?;
    let run = executor.run(home_endpoint, query, parsed.query_type);
    let mut rs = match tokio::time::timeout(limits.timeout, run).await {
        Ok(result) => result?,
        Err(_) => return Err(fail(format!("no answer within {} ms", limits.timeout.as_millis()), true)),
    };
    rs.truncate(limits.max_rows);
    rs.origin = vec![home_endpoint.to_string()];
    for s in parsed.service_endpoints() {
        if !rs.origin.iter().any(|o| o == s) {
            rs.origin.push(s.to_string());
        }
    }
    Ok(rs)
}
