#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;
use sparqlgen_core::client::{ClientOptions, SparqlClient};
use sparqlgen_core::harvest::{EndpointDescriptor, QueryExample, RawVoidRecord};
use sparqlgen_core::knowledge::{KnowledgeBase, KnowledgeSources};
use sparqlgen_core::llm::{LlmProvider, ScriptedLlm, Transcript};
use sparqlgen_core::pipeline::{HttpExecutor, Pipeline, PipelineConfig};
use sparqlgen_core::retrieval::{mock_provider, HashEmbedder};
use sparqlgen_testkit::{fixture_path, read_fixture, store_from_fixtures, FixtureEndpoint};

pub const UNIPROT: &str = "https://sparql.uniprot.org/sparql";
pub const BGEE: &str = "https://www.bgee.org/sparql/";

pub fn embedder() -> HashEmbedder {
    mock_provider(64, 7)
}

pub fn jsonl_examples(name: &str) -> Vec<QueryExample> {
    read_fixture(name)
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            QueryExample::new(
                v["id"].as_str().unwrap(),
                v["question"].as_str().unwrap(),
                v["language_tag"].as_str().unwrap_or("en"),
                v["sparql"].as_str().unwrap(),
                v["endpoint_url"].as_str().unwrap(),
            )
            .unwrap()
        })
        .collect()
}

pub fn bio_sources(examples: Vec<QueryExample>) -> KnowledgeSources {
    let void: BTreeMap<String, Vec<RawVoidRecord>> = serde_json::from_str(&read_fixture("bio_schema.json")).unwrap();
    let mut uniprot = EndpointDescriptor::new(UNIPROT);
    uniprot.label = "UniProt".into();
    uniprot.description = "Protein sequences and functional annotation.".into();
    let mut bgee = EndpointDescriptor::new(BGEE);
    bgee.label = "Bgee".into();
    bgee.description = "Gene expression across animal anatomy.".into();
    KnowledgeSources { endpoints: vec![uniprot, bgee], examples, void }
}

pub async fn bio_kb() -> KnowledgeBase {
    KnowledgeBase::build(&bio_sources(jsonl_examples("bio_conformant.jsonl")), &embedder(), 1.0, 64)
        .await
        .unwrap()
}

/// The UniProt-style store, with the Bgee-style store behind its SERVICE.
pub async fn bio_endpoint() -> FixtureEndpoint {
    FixtureEndpoint::builder(store_from_fixtures(&["uniprot_mini.ttl"]))
        .service(BGEE, store_from_fixtures(&["bgee_mini.ttl"]))
        .start()
        .await
}

pub fn executor_for(endpoint: &FixtureEndpoint) -> HttpExecutor {
    let client = SparqlClient::new(ClientOptions { retries: 0, ..ClientOptions::default() });
    HttpExecutor::new(client).route(UNIPROT, endpoint.url.clone())
}

pub fn transcript(name: &str) -> Transcript {
    Transcript::from_file(&fixture_path(&format!("transcripts/{name}.json"))).unwrap()
}

pub struct Stack {
    pub endpoint: FixtureEndpoint,
    pub kb: Arc<KnowledgeBase>,
}

impl Stack {
    pub async fn new() -> Self {
        Stack { endpoint: bio_endpoint().await, kb: Arc::new(bio_kb().await) }
    }

    pub fn pipeline(&self, llm: Arc<dyn LlmProvider>) -> Pipeline {
        Pipeline::new(
            self.kb.clone(),
            llm,
            Arc::new(embedder()),
            Arc::new(executor_for(&self.endpoint)),
            PipelineConfig::default(),
        )
    }

    pub fn scripted(&self, name: &str) -> (Pipeline, Arc<ScriptedLlm>, Transcript) {
        let t = transcript(name);
        let llm = Arc::new(ScriptedLlm::new(t.clone()));
        (self.pipeline(llm.clone()), llm, t)
    }
}
