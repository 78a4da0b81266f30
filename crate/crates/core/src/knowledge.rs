//! Everything the pipeline reads at question time: the vector index plus
//! the examples, shapes, schemas and endpoint descriptions it points into.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harvest::{EndpointDescriptor, HarvestRecord, QueryExample, RawVoidRecord};
use crate::iri::PrefixMap;
use crate::retrieval::{build_index, EmbeddingProvider, IndexError, IndexInput, ItemKind, VectorIndex};
use crate::schema::{build_matrix, render_shapes, shape_summary_text, truncate_matrix, ClassPropertyMatrix, SchemaError, SchemaShape};

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("the index does not match the metadata: {0}")]
    Mismatch(String),
}

/// Harvested metadata, before indexing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSources {
    pub endpoints: Vec<EndpointDescriptor>,
    pub examples: Vec<QueryExample>,
    /// VoID records per endpoint URL.
    pub void: BTreeMap<String, Vec<RawVoidRecord>>,
}

impl KnowledgeSources {
    pub fn from_records(records: &[HarvestRecord]) -> Self {
        let mut sources = KnowledgeSources::default();
        for r in records {
            sources.endpoints.push(r.endpoint.clone());
            sources.examples.extend(r.examples.usable.iter().cloned());
            sources.void.insert(r.endpoint.endpoint_url.clone(), r.void.clone());
        }
        sources
    }

    /// Same endpoints and schemas with only the examples `keep` accepts.
    pub fn filter_examples(&self, keep: impl Fn(&QueryExample) -> bool) -> Self {
        KnowledgeSources {
            endpoints: self.endpoints.clone(),
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
            void: self.void.clone(),
        }
    }
}

pub fn example_item_id(example_id: &str) -> String {
    format!("example:{example_id}")
}

pub fn class_item_id(endpoint_url: &str, class_iri: &str) -> String {
    format!("class:{endpoint_url}|{class_iri}")
}

pub fn endpoint_item_id(endpoint_url: &str) -> String {
    format!("endpoint:{endpoint_url}")
}

/// A shape together with the endpoint whose data it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointShape {
    pub endpoint_url: String,
    pub shape: SchemaShape,
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub index: VectorIndex,
    /// Keyed by index item id.
    pub examples: BTreeMap<String, QueryExample>,
    /// Keyed by index item id.
    pub shapes: BTreeMap<String, EndpointShape>,
    /// Full (untruncated) schemas, used for validation.
    pub schemas: BTreeMap<String, ClassPropertyMatrix>,
    pub endpoints: BTreeMap<String, EndpointDescriptor>,
    pub prefixes: PrefixMap,
}

struct Prepared {
    inputs: Vec<IndexInput>,
    examples: BTreeMap<String, QueryExample>,
    shapes: BTreeMap<String, EndpointShape>,
    schemas: BTreeMap<String, ClassPropertyMatrix>,
    endpoints: BTreeMap<String, EndpointDescriptor>,
    prefixes: PrefixMap,
}

fn prepare(sources: &KnowledgeSources, schema_fraction: f64) -> Result<Prepared, SchemaError> {
    let mut prefixes = PrefixMap::default();
    let mut examples = BTreeMap::new();
    let mut inputs = Vec::new();
    for ex in &sources.examples {
        let mut ex = ex.clone();
        if ex.parsed.is_none() && ex.reparse().is_err() {
            continue;
        }
        if let Some(parsed) = ex.parsed() {
            for (p, ns) in &parsed.prefixes {
                if prefixes.namespace(p).is_none() {
                    prefixes.add(p, ns);
                }
            }
        }
        let item_id = example_item_id(&ex.id);
        inputs.push(IndexInput {
            item_id: item_id.clone(),
            kind: ItemKind::Example,
            payload_text: ex.question.clone(),
            source_ref: ex.id.clone(),
            endpoint_url: ex.endpoint_url.clone(),
        });
        examples.insert(item_id, ex);
    }

    let mut schemas = BTreeMap::new();
    let mut shapes = BTreeMap::new();
    for (endpoint, records) in &sources.void {
        let full = build_matrix(records);
        let shown = truncate_matrix(&full, schema_fraction)?;
        for shape in render_shapes(&shown, &prefixes) {
            let item_id = class_item_id(endpoint, &shape.class_iri);
            inputs.push(IndexInput {
                item_id: item_id.clone(),
                kind: ItemKind::SchemaClass,
                payload_text: shape_summary_text(&shape),
                source_ref: shape.class_iri.clone(),
                endpoint_url: endpoint.clone(),
            });
            shapes.insert(item_id, EndpointShape { endpoint_url: endpoint.clone(), shape });
        }
        schemas.insert(endpoint.clone(), full);
    }

    let mut endpoints = BTreeMap::new();
    for ep in &sources.endpoints {
        let text = endpoint_text(ep);
        if !text.trim().is_empty() {
            inputs.push(IndexInput {
                item_id: endpoint_item_id(&ep.endpoint_url),
                kind: ItemKind::EndpointInfo,
                payload_text: text,
                source_ref: ep.endpoint_url.clone(),
                endpoint_url: ep.endpoint_url.clone(),
            });
        }
        endpoints.insert(ep.endpoint_url.clone(), ep.clone());
    }
    Ok(Prepared { inputs, examples, shapes, schemas, endpoints, prefixes })
}

/// The text shown to the model (and embedded) for an endpoint.
pub fn endpoint_text(ep: &EndpointDescriptor) -> String {
    match (ep.label.trim(), ep.description.trim()) {
        ("", "") => String::new(),
        (label, "") => format!("{label} ({})", ep.endpoint_url),
        ("", description) => format!("{} : {description}", ep.endpoint_url),
        (label, description) => format!("{label} ({}): {description}", ep.endpoint_url),
    }
}

impl KnowledgeBase {
    /// Renders shapes at `schema_fraction`, embeds examples, shapes and
    /// endpoint descriptions, and builds the index.
    pub async fn build(
        sources: &KnowledgeSources,
        provider: &dyn EmbeddingProvider,
        schema_fraction: f64,
        batch_size: usize,
    ) -> Result<Self, KnowledgeError> {
        let p = prepare(sources, schema_fraction)?;
        let index = build_index(p.inputs, provider, batch_size).await?;
        Ok(KnowledgeBase {
            index,
            examples: p.examples,
            shapes: p.shapes,
            schemas: p.schemas,
            endpoints: p.endpoints,
            prefixes: p.prefixes,
        })
    }

    /// Pairs sources with an index loaded from disk, checking that both
    /// describe the same items.
    pub fn assemble(
        sources: &KnowledgeSources,
        index: VectorIndex,
        schema_fraction: f64,
    ) -> Result<Self, KnowledgeError> {
        let p = prepare(sources, schema_fraction)?;
        if p.inputs.len() != index.len() {
            return Err(KnowledgeError::Mismatch(format!(
                "{} items indexed, {} expected",
                index.len(),
                p.inputs.len()
            )));
        }
        if let Some(missing) = p.inputs.iter().find(|i| index.get(&i.item_id).is_none()) {
            return Err(KnowledgeError::Mismatch(format!("{} is not indexed", missing.item_id)));
        }
        Ok(KnowledgeBase {
            index,
            examples: p.examples,
            shapes: p.shapes,
            schemas: p.schemas,
            endpoints: p.endpoints,
            prefixes: p.prefixes,
        })
    }

    pub fn example_count(&self) -> usize {
        self.examples.len()
    }

    pub fn has_example(&self, example_id: &str) -> bool {
        self.examples.contains_key(&example_item_id(example_id))
    }
}
