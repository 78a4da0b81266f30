//! SPARQL protocol client with timeouts and retries.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use reqwest::StatusCode;

use crate::results::ResultSet;
use crate::sparql::{parse_ntriples, QueryType};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("endpoint {endpoint} is unreachable: {message}")]
    Unreachable { endpoint: String, message: String },
    #[error("query to {endpoint} timed out after {timeout_ms} ms")]
    Timeout { endpoint: String, timeout_ms: u64 },
    #[error("endpoint {endpoint} answered HTTP {status}: {message}")]
    Http { endpoint: String, status: u16, message: String },
    #[error("endpoint {endpoint} returned an unreadable response: {message}")]
    InvalidResponse { endpoint: String, message: String },
}

impl ClientError {
    pub fn endpoint(&self) -> &str {
        match self {
            ClientError::Unreachable { endpoint, .. }
            | ClientError::Timeout { endpoint, .. }
            | ClientError::Http { endpoint, .. }
            | ClientError::InvalidResponse { endpoint, .. } => endpoint,
        }
    }

    fn retryable(&self) -> bool {
        match self {
            ClientError::Unreachable { .. } | ClientError::Timeout { .. } => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            ClientError::InvalidResponse { .. } => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub timeout: Duration,
    pub retries: u32,
    /// First retry waits this long; each further retry doubles it.
    pub backoff: Duration,
    pub user_agent: String,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(500),
            user_agent: concat!("sparqlgen/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

/// Sends queries over the SPARQL 1.1 protocol (form-encoded POST).
#[derive(Debug)]
pub struct SparqlClient {
    http: reqwest::Client,
    options: ClientOptions,
    sent: AtomicU64,
}

impl SparqlClient {
    pub fn new(options: ClientOptions) -> Self {
        let http = reqwest::Client::builder()
            .user_agent(options.user_agent.clone())
            .build()
            .expect("static reqwest configuration is valid");
        SparqlClient { http, options, sent: AtomicU64::new(0) }
    }

    pub fn options(&self) -> &ClientOptions {
        &self.options
    }

    /// Number of HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.sent.load(Ordering::Relaxed)
    }

    /// SELECT or ASK query returning SPARQL JSON results.
    pub async fn select(&self, endpoint: &str, query: &str) -> Result<ResultSet, ClientError> {
        let body = self.send(endpoint, query, "application/sparql-results+json").await?;
        ResultSet::from_sparql_json(&body).map_err(|e| ClientError::InvalidResponse {
            endpoint: endpoint.to_string(),
            message: e.to_string(),
        })
    }

    /// Runs any query form; CONSTRUCT and DESCRIBE results come back as
    /// subject/predicate/object rows.
    pub async fn query(
        &self,
        endpoint: &str,
        query: &str,
        query_type: QueryType,
    ) -> Result<ResultSet, ClientError> {
        match query_type {
            QueryType::Select | QueryType::Ask => self.select(endpoint, query).await,
            QueryType::Construct | QueryType::Describe => {
                let body = self.send(endpoint, query, "application/n-triples").await?;
                let triples = parse_ntriples(&body).map_err(|e| ClientError::InvalidResponse {
                    endpoint: endpoint.to_string(),
                    message: e.to_string(),
                })?;
                Ok(ResultSet::from_triples(&triples))
            }
        }
    }

    async fn send(&self, endpoint: &str, query: &str, accept: &str) -> Result<String, ClientError> {
        let mut attempt = 0;
        loop {
            match self.send_once(endpoint, query, accept).await {
                Ok(body) => return Ok(body),
                Err(e) if e.retryable() && attempt < self.options.retries => {
                    let wait = self.options.backoff * 2u32.saturating_pow(attempt);
                    tracing::debug!(endpoint, attempt, error = %e, "retrying SPARQL request");
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    async fn send_once(&self, endpoint: &str, query: &str, accept: &str) -> Result<String, ClientError> {
        self.sent.fetch_add(1, Ordering::Relaxed);
        let response = self
            .http
            .post(endpoint)
            .timeout(self.options.timeout)
            .header(reqwest::header::ACCEPT, accept)
            .form(&[("query", query)])
            .send()
            .await
            .map_err(|e| self.transport_error(endpoint, e))?;
        let status = response.status();
        let body = response.text().await.map_err(|e| self.transport_error(endpoint, e))?;
        if status != StatusCode::OK {
            let message: String = body.chars().take(500).collect();
            return Err(ClientError::Http {
                endpoint: endpoint.to_string(),
                status: status.as_u16(),
                message,
            });
        }
        Ok(body)
    }

    fn transport_error(&self, endpoint: &str, e: reqwest::Error) -> ClientError {
        if e.is_timeout() {
            ClientError::Timeout {
                endpoint: endpoint.to_string(),
                timeout_ms: self.options.timeout.as_millis() as u64,
            }
        } else {
            ClientError::Unreachable { endpoint: endpoint.to_string(), message: e.to_string() }
        }
    }
}

impl Default for SparqlClient {
    fn default() -> Self {
        SparqlClient::new(ClientOptions::default())
    }
}
