//! Endpoint metadata: example queries, VoID statistics and self-descriptions.

mod cache;
mod void;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::client::{ClientError, SparqlClient};
use crate::results::{RdfTerm, ResultSet};
use crate::sparql::{parse_query, ParsedQuery, SyntaxError};

pub use cache::{CacheError, HarvestCache};
pub use void::{
    fetch_void, generate_void, render_void_turtle, RawVoidRecord, VoidMode, VoidOptions,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarvestError {
    #[error(transparent)]
    Endpoint(#[from] ClientError),
    #[error("{endpoint} does not publish {what}")]
    MetadataMissing { endpoint: String, what: &'static str },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataStatus {
    pub has_examples: bool,
    pub has_void: bool,
    pub has_description: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointDescriptor {
    pub endpoint_url: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub metadata_status: MetadataStatus,
}

impl EndpointDescriptor {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        let endpoint_url = endpoint_url.into();
        EndpointDescriptor {
            label: endpoint_url.clone(),
            endpoint_url,
            description: String::new(),
            metadata_status: MetadataStatus::default(),
        }
    }
}

/// A question paired with the SPARQL query that answers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryExample {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub language_tag: String,
    pub sparql: String,
    pub endpoint_url: String,
    #[serde(default)]
    pub is_federated: bool,
    #[serde(skip)]
    pub parsed: Option<ParsedQuery>,
}

impl QueryExample {
    /// Parses `sparql` and fills in `parsed` and `is_federated`.
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        language_tag: impl Into<String>,
        sparql: impl Into<String>,
        endpoint_url: impl Into<String>,
    ) -> Result<Self, QuarantinedExample> {
        let mut ex = QueryExample {
            id: id.into(),
            question: question.into(),
            language_tag: language_tag.into(),
            sparql: sparql.into(),
            endpoint_url: endpoint_url.into(),
            is_federated: false,
            parsed: None,
        };
        match ex.reparse() {
            Ok(()) => Ok(ex),
            Err(error) => Err(QuarantinedExample {
                id: ex.id,
                question: ex.question,
                sparql: ex.sparql,
                endpoint_url: ex.endpoint_url,
                error,
            }),
        }
    }

    /// Restores `parsed` after deserialization.
    pub fn reparse(&mut self) -> Result<(), SyntaxError> {
        let parsed = parse_query(&self.sparql)?;
        self.is_federated = parsed.is_federated();
        self.parsed = Some(parsed);
        Ok(())
    }

    pub fn parsed(&self) -> Option<&ParsedQuery> {
        self.parsed.as_ref()
    }
}

/// An example whose SPARQL did not parse. Kept for operators to inspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedExample {
    pub id: String,
    pub question: String,
    pub sparql: String,
    pub endpoint_url: String,
    pub error: SyntaxError,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarvestedExamples {
    pub usable: Vec<QueryExample>,
    pub quarantined: Vec<QuarantinedExample>,
}

impl HarvestedExamples {
    pub fn is_empty(&self) -> bool {
        self.usable.is_empty() && self.quarantined.is_empty()
    }

    pub fn push(&mut self, result: Result<QueryExample, QuarantinedExample>) {
        match result {
            Ok(e) => self.usable.push(e),
            Err(q) => {
                tracing::warn!(id = %q.id, error = %q.error, "quarantined example query");
                self.quarantined.push(q)
            }
        }
    }
}

const EXAMPLES_PATTERN: &str = "
    ?ex a sh:SPARQLExecutable ;
        rdfs:comment ?question .
    { ?ex sh:select ?query } UNION { ?ex sh:ask ?query }
    UNION { ?ex sh:construct ?query } UNION { ?ex sh:describe ?query }";

const EXAMPLES_PREFIXES: &str = "PREFIX sh: <http://www.w3.org/ns/shacl#>
PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>
";

/// Runs `pattern` against the default graph, then (if that found nothing)
/// against every named graph.
pub(crate) async fn select_with_graph_fallback(
    client: &SparqlClient,
    endpoint: &str,
    prefixes: &str,
    projection: &str,
    pattern: &str,
) -> Result<ResultSet, ClientError> {
    let default = format!("{prefixes}SELECT {projection} WHERE {{{pattern}\n}}");
    let rs = client.select(endpoint, &default).await?;
    if !rs.is_empty() {
        return Ok(rs);
    }
    let named = format!("{prefixes}SELECT {projection} WHERE {{ GRAPH ?g {{{pattern}\n}} }}");
    client.select(endpoint, &named).await
}

/// Reads SHACL-described example queries (`sh:SPARQLExecutable` with an
/// `rdfs:comment` question). One example per resource; when the question is
/// published in several languages, `preferred_language` wins, else the
/// lexicographically smallest tag. Examples come back sorted by id.
pub async fn fetch_examples(
    client: &SparqlClient,
    endpoint: &EndpointDescriptor,
    preferred_language: &str,
) -> Result<HarvestedExamples, HarvestError> {
    let rs = select_with_graph_fallback(
        client,
        &endpoint.endpoint_url,
        EXAMPLES_PREFIXES,
        "DISTINCT ?ex ?question ?query",
        EXAMPLES_PATTERN,
    )
    .await?;

    let mut by_example: BTreeMap<String, (Vec<RdfTerm>, Vec<String>)> = BTreeMap::new();
    for row in &rs.rows {
        let (Some(ex), Some(q), Some(sparql)) = (row.get("ex"), row.get("question"), row.get("query"))
        else {
            continue;
        };
        let entry = by_example.entry(ex.value.clone()).or_default();
        if !entry.0.contains(q) {
            entry.0.push(q.clone());
        }
        if !entry.1.contains(&sparql.value) {
            entry.1.push(sparql.value.clone());
        }
    }

    let mut out = HarvestedExamples::default();
    for (id, (questions, mut queries)) in by_example {
        let Some(question) = pick_language(&questions, preferred_language) else { continue };
        queries.sort();
        let sparql = queries.swap_remove(0);
        if question.value.trim().is_empty() || sparql.trim().is_empty() {
            continue;
        }
        let tag = question.language.clone().unwrap_or_default();
        out.push(QueryExample::new(id, question.value.clone(), tag, sparql, &endpoint.endpoint_url));
    }
    Ok(out)
}

/// Chooses among language variants of a literal: exact (case-insensitive)
/// match on `preferred` first, otherwise the smallest language tag (untagged
/// counts as the empty tag). Equal tags fall back to the smaller value.
pub fn pick_language<'a>(values: &'a [RdfTerm], preferred: &str) -> Option<&'a RdfTerm> {
    let tag = |t: &RdfTerm| t.language.clone().unwrap_or_default().to_ascii_lowercase();
    let preferred = preferred.to_ascii_lowercase();
    values
        .iter()
        .filter(|t| tag(t) == preferred)
        .min_by(|a, b| a.value.cmp(&b.value))
        .or_else(|| values.iter().min_by(|a, b| tag(a).cmp(&tag(b)).then(a.value.cmp(&b.value))))
}

const DESCRIPTION_PATTERN: &str = "
    VALUES ?type { sd:Service void:Dataset schema:Dataset schemahttp:Dataset }
    ?s a ?type .
    {
      ?s schema:name|schemahttp:name|rdfs:label|dcterms:title ?value .
      BIND (\"label\" AS ?field)
    } UNION {
      ?s schema:description|schemahttp:description|rdfs:comment|dcterms:description ?value .
      BIND (\"description\" AS ?field)
    }";

const DESCRIPTION_PREFIXES: &str = "PREFIX sd: <http://www.w3.org/ns/sparql-service-description#>
PREFIX void: <http://rdfs.org/ns/void#>
PREFIX schema: <https://schema.org/>
PREFIX schemahttp: <http://schema.org/>
PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>
PREFIX dcterms: <http://purl.org/dc/terms/>
";

/// Fills label and description from the endpoint's service or dataset
/// description. A missing description clears `has_description` but is not an error.
pub async fn fetch_endpoint_description(
    client: &SparqlClient,
    endpoint: &EndpointDescriptor,
    preferred_language: &str,
) -> Result<EndpointDescriptor, HarvestError> {
    let rs = select_with_graph_fallback(
        client,
        &endpoint.endpoint_url,
        DESCRIPTION_PREFIXES,
        "DISTINCT ?field ?value",
        DESCRIPTION_PATTERN,
    )
    .await?;
    let mut labels = Vec::new();
    let mut descriptions = Vec::new();
    for row in &rs.rows {
        let (Some(field), Some(value)) = (row.get("field"), row.get("value")) else { continue };
        if !value.is_literal() {
            continue;
        }
        match field.value.as_str() {
            "label" => labels.push(value.clone()),
            _ => descriptions.push(value.clone()),
        }
    }
    let mut out = endpoint.clone();
    if let Some(label) = pick_language(&labels, preferred_language) {
        out.label = label.value.clone();
    }
    match pick_language(&descriptions, preferred_language) {
        Some(d) => {
            out.description = d.value.clone();
            out.metadata_status.has_description = true;
        }
        None => out.metadata_status.has_description = !labels.is_empty(),
    }
    Ok(out)
}

/// Settings that shape one endpoint's harvest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestOptions {
    pub preferred_language: String,
    pub void: VoidOptions,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions { preferred_language: "en".into(), void: VoidOptions::default() }
    }
}

/// Where the VoID records of a harvest came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoidSource {
    Published,
    Generated,
    None,
}

/// Everything harvested from one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestRecord {
    pub endpoint: EndpointDescriptor,
    pub examples: HarvestedExamples,
    pub void: Vec<RawVoidRecord>,
    pub void_source: VoidSource,
    /// Seconds since the Unix epoch.
    pub harvested_at: u64,
}

impl HarvestRecord {
    /// Restores parsed queries after loading from disk.
    pub fn reparse(&mut self) {
        for ex in &mut self.examples.usable {
            let _ = ex.reparse();
        }
    }
}

/// Harvests description, examples and VoID for one endpoint. When the
/// endpoint publishes no VoID, statistics are generated with `options.void`.
pub async fn harvest_endpoint(
    client: &SparqlClient,
    endpoint: &EndpointDescriptor,
    options: &HarvestOptions,
) -> Result<HarvestRecord, HarvestError> {
    let mut descriptor =
        fetch_endpoint_description(client, endpoint, &options.preferred_language).await?;
    let examples = fetch_examples(client, &descriptor, &options.preferred_language).await?;
    descriptor.metadata_status.has_examples = !examples.usable.is_empty();

    let published = fetch_void(client, &descriptor).await?;
    descriptor.metadata_status.has_void = !published.is_empty();
    let (void, void_source) = if !published.is_empty() {
        (published, VoidSource::Published)
    } else if options.void.generate_when_missing {
        let generated = generate_void(client, &descriptor, &options.void).await?;
        let source = if generated.is_empty() { VoidSource::None } else { VoidSource::Generated };
        (generated, source)
    } else {
        (Vec::new(), VoidSource::None)
    };

    let harvested_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(HarvestRecord { endpoint: descriptor, examples, void, void_source, harvested_at })
}

/// Fails with [`HarvestError::MetadataMissing`] when the record lacks examples.
pub fn require_examples(record: &HarvestRecord) -> Result<(), HarvestError> {
    if record.examples.usable.is_empty() {
        return Err(HarvestError::MetadataMissing {
            endpoint: record.endpoint.endpoint_url.clone(),
            what: "example queries",
        });
    }
    Ok(())
}
