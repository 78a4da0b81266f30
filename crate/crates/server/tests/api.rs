mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use serde_json::{json, Value};
use sparqlgen_core::eval::echo_reference_llm;
use sparqlgen_core::llm::{FnLlm, PromptKind, ScriptedLlm, Transcript};
use sparqlgen_core::pipeline::{events_from_turn, PipelineConfig};
use sparqlgen_server::turnlog::{read_entries, TurnLog};
use sparqlgen_testkit::fixture_path;

fn echo_state() -> sparqlgen_server::AppState {
    let llm = Arc::new(echo_reference_llm(&examples("bio_conformant.jsonl")));
    state(llm, Arc::new(dead_executor()), bio_sources())
}

#[tokio::test]
async fn ask_returns_the_generated_query() {
    let server = Server::indexed(echo_state()).await;
    let ex = &examples("bio_conformant.jsonl")[1];
    let (status, generation, body) = server.ask("uniprot", &ex.question).await;
    assert_eq!(status, 200);
    assert_eq!(generation, Some(1));
    assert_eq!(body, json!({ "dataset": "uniprot", "question": ex.question, "query": ex.sparql }));

    let (_, _, again) = server.ask("uniprot", &ex.question).await;
    assert_eq!(again, body);
}

#[tokio::test]
async fn ask_rejects_bad_requests() {
    let server = Server::indexed(echo_state()).await;
    let (status, _, body) = server.ask("nope", "Which proteins?").await;
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "unknown_dataset");
    let (status, _, body) = server.ask("uniprot", "").await;
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "empty_question");
    let (status, body) = server.get("/v1/ask?dataset=uniprot").await;
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "empty_question");
    let (status, body) = server.get("/v1/ask?question=hi").await;
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "missing_parameter");
}

#[tokio::test]
async fn ask_before_indexing_is_unavailable() {
    let server = Server::start(echo_state()).await;
    let (status, _, body) = server.ask("uniprot", "Which proteins?").await;
    assert_eq!(status, 503);
    assert_eq!(body["error"]["code"], "not_indexed");
    let (status, body) = server.get("/v1/status").await;
    assert_eq!(status, 503);
    assert_eq!(body["indexed"], false);
    assert_eq!(body["datasets"][0]["example_count"], 0);
}

#[tokio::test]
async fn ask_without_a_query_answers_with_an_empty_string() {
    let garbage = FnLlm::new("garbage", |p| {
        Ok(match p.kind {
            PromptKind::Decompose => "{}".into(),
            _ => "I cannot write that query.".into(),
        })
    });
    let server = Server::indexed(state(Arc::new(garbage), Arc::new(dead_executor()), bio_sources())).await;
    let (status, _, body) = server.ask("uniprot", "Which proteins are reviewed?").await;
    assert_eq!(status, 200);
    assert_eq!(body["query"], "");
}

#[tokio::test]
async fn health_and_status() {
    let server = Server::indexed(echo_state()).await;
    assert_eq!(server.get("/v1/health").await, (200, json!({ "status": "ok" })));
    let (status, body) = server.get("/v1/status").await;
    assert_eq!(status, 200);
    assert_eq!(body["indexed"], true);
    assert_eq!(body["generation"], 1);
    let d = &body["datasets"][0];
    assert_eq!(d["dataset_id"], "uniprot");
    assert_eq!(d["endpoint_url"], UNIPROT);
    assert_eq!(d["example_count"], 24);
    assert_eq!(d["metadata_status"], json!({ "has_examples": true, "has_void": true, "has_description": false }));
    assert_eq!(d["reindex_in_flight"], false);
    assert!(d["shape_count"].as_u64().unwrap() > 0);
    assert!(d["index_checksum"].as_str().unwrap().len() == 64);
}

#[tokio::test]
async fn status_counts_126_examples() {
    let sources = StaticSources::new(vec![
        record(UNIPROT, examples("uniprot_examples_126.jsonl")),
        record(BGEE, Vec::new()),
    ]);
    let llm = Arc::new(echo_reference_llm(&[]));
    let server = Server::indexed(state(llm, Arc::new(dead_executor()), sources)).await;
    let (_, body) = server.get("/v1/status").await;
    assert_eq!(body["datasets"][0]["example_count"], 126);
}

#[tokio::test]
async fn reindex_requires_the_admin_token() {
    let server = Server::indexed(echo_state()).await;
    let (status, body) = server.reindex("uniprot", None).await;
    assert_eq!(status, 401);
    assert_eq!(body["error"]["code"], "unauthorized");
    assert_eq!(server.reindex("uniprot", Some("wrong")).await.0, 401);
    assert_eq!(server.reindex("nope", Some(ADMIN_TOKEN)).await.0, 404);

    let closed = Server::indexed(echo_state().with_admin_token(None)).await;
    assert_eq!(closed.reindex("uniprot", Some("")).await.0, 401);
}

#[tokio::test]
async fn reindex_runs_in_the_background_and_keeps_the_checksum() {
    let sources = bio_sources();
    let llm = Arc::new(echo_reference_llm(&examples("bio_conformant.jsonl")));
    let server = Server::indexed(state(llm, Arc::new(dead_executor()), sources.clone())).await;
    let (_, before) = server.get("/v1/status").await;
    *sources.delay.lock() = Duration::from_millis(300);

    let (status, body) = server.reindex("uniprot", Some(ADMIN_TOKEN)).await;
    assert_eq!(status, 202);
    assert_eq!(body["dataset"], "uniprot");
    let (_, during) = server.get("/v1/status").await;
    assert_eq!(during["datasets"][0]["reindex_in_flight"], true);
    assert_eq!(during["generation"], 1);
    let (status, body) = server.reindex("uniprot", Some(ADMIN_TOKEN)).await;
    assert_eq!(status, 409);
    assert_eq!(body["error"]["code"], "reindex_in_flight");

    server.wait_for_reindex().await;
    let (_, after) = server.get("/v1/status").await;
    let (b, a) = (&before["datasets"][0], &after["datasets"][0]);
    assert_eq!(after["generation"], 2);
    assert_eq!(a["reindex_in_flight"], false);
    assert_eq!(a["index_checksum"], b["index_checksum"]);
    assert!(a["last_harvest"].as_u64().unwrap() > b["last_harvest"].as_u64().unwrap());
    assert_eq!(server.reindex("uniprot", Some(ADMIN_TOKEN)).await.0, 202);
    server.wait_for_reindex().await;
}

#[tokio::test]
async fn reindex_swaps_atomically_under_concurrent_load() {
    let sources = StaticSources::new(vec![record(UNIPROT, marked_examples("marker-v1")), record(BGEE, Vec::new())]);
    let server = Arc::new(
        Server::indexed(state(Arc::new(generation_revealing_llm()), Arc::new(dead_executor()), sources.clone())).await,
    );
    sources.set(record(UNIPROT, marked_examples("marker-v2")));
    *sources.delay.lock() = Duration::from_millis(150);
    assert_eq!(server.reindex("uniprot", Some(ADMIN_TOKEN)).await.0, 202);

    let mut handles = Vec::new();
    for wave in 0..6 {
        for i in 0..40 {
            let server = server.clone();
            handles.push(tokio::spawn(async move {
                let in_flight = !server.state.reindex_in_flight().is_empty();
                let (status, generation, body) = server.ask("uniprot", &format!("Which proteins? {wave}-{i}")).await;
                (in_flight, status, generation, body)
            }));
        }
        tokio::time::sleep(Duration::from_millis(40)).await;
    }
    let mut during = 0;
    let mut seen = [0usize; 3];
    for h in handles {
        let (in_flight, status, generation, body) = h.await.unwrap();
        assert_eq!(status, 200);
        let generation = generation.unwrap();
        let query = body["query"].as_str().unwrap();
        assert!(query.contains(&format!("?v{generation} ")), "generation {generation} answered {query}");
        seen[generation as usize] += 1;
        during += usize::from(in_flight);
    }
    server.wait_for_reindex().await;
    assert!(during >= 100, "only {during} requests overlapped the reindex");
    assert!(seen[1] > 0 && seen[2] > 0, "requests saw generations {seen:?}");
}

fn scripted_state(name: &str, endpoint: &sparqlgen_testkit::FixtureEndpoint) -> (sparqlgen_server::AppState, Transcript) {
    let t = Transcript::from_file(&fixture_path(&format!("transcripts/{name}.json"))).unwrap();
    let st = state(Arc::new(ScriptedLlm::new(t.clone())), Arc::new(executor_for(endpoint)), bio_sources());
    (st, t)
}

#[tokio::test]
async fn chat_streams_stages_in_order_for_every_transcript() {
    let endpoint = bio_endpoint().await;
    for name in ["happy_path", "protein_disease", "pass_at_3", "exhausted", "no_query"] {
        let (st, t) = scripted_state(name, &endpoint);
        let server = Server::indexed(st).await;
        let question = t.question.clone().unwrap();
        let (status, events) = server.chat(json!({ "question": question, "dataset": "uniprot", "language": "en" })).await;
        assert_eq!(status, 200, "{name}");
        assert_stage_order(&events);
        let n = names(&events);
        match name {
            "happy_path" => assert_eq!(
                n,
                [
                    "decomposition",
                    "context",
                    "attempt",
                    "validation_report",
                    "final_query",
                    "results",
                    "interpretation",
                    "accounting",
                    "done"
                ]
            ),
            "protein_disease" => {
                assert_eq!(&n[2..6], ["attempt", "validation_report", "attempt", "validation_report"]);
                assert_eq!(events[3].1["passed"], false);
                assert_eq!(events[5].1["passed"], true);
                assert_eq!(n[6], "final_query");
            }
            "no_query" => assert_eq!(&n[n.len() - 2..], ["error", "done"]),
            _ => {}
        }
        if let Some((_, acc)) = events.iter().find(|(n, _)| n == "accounting") {
            let usage = t.usage();
            assert_eq!(acc["input_tokens"], usage.input_tokens);
            assert_eq!(acc["output_tokens"], usage.output_tokens);
        }
    }
}

#[tokio::test]
async fn chat_reports_an_unreachable_endpoint_after_the_final_query() {
    let t = Transcript::from_file(&fixture_path("transcripts/happy_path.json")).unwrap();
    let question = t.question.clone().unwrap();
    let st = state(Arc::new(ScriptedLlm::new(t)), Arc::new(dead_executor()), bio_sources());
    let server = Server::indexed(st).await;
    let (_, events) = server.chat(json!({ "question": question, "dataset": "uniprot" })).await;
    let n = names(&events);
    assert_eq!(&n[n.len() - 3..], ["final_query", "error", "done"]);
    assert_eq!(events[n.len() - 2].1["stage"], "execution");
}

#[tokio::test]
async fn chat_rejects_bad_requests_before_streaming() {
    let server = Server::indexed(echo_state()).await;
    let (status, body) = server.chat(json!({ "question": "x", "dataset": "nope" })).await;
    assert_eq!((status, body[0].1["error"]["code"].clone()), (404, json!("unknown_dataset")));
    let (status, _) = server.chat(json!({ "question": "  ", "dataset": "uniprot" })).await;
    assert_eq!(status, 400);
    let (status, _) = server.chat(json!({ "dataset": "uniprot" })).await;
    assert_eq!(status, 400);
    let fresh = Server::start(echo_state()).await;
    assert_eq!(fresh.chat(json!({ "question": "x", "dataset": "uniprot" })).await.0, 503);
}

#[tokio::test]
async fn logged_turns_replay_to_the_streamed_events() {
    let endpoint = bio_endpoint().await;
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("turns.jsonl");
    for name in ["happy_path", "protein_disease", "exhausted"] {
        let (st, t) = scripted_state(name, &endpoint);
        let st = st.with_turn_log(Some(TurnLog::open(log_path.to_str().unwrap()).unwrap()));
        let server = Server::indexed(st).await;
        let (_, live) = server.chat(json!({ "question": t.question.clone().unwrap(), "dataset": "uniprot" })).await;
        // The turn is logged right after the stream closes.
        tokio::time::sleep(Duration::from_millis(50)).await;
        let entries = read_entries(&std::fs::read_to_string(&log_path).unwrap()).unwrap();
        let entry = entries.last().unwrap();
        assert_eq!((entry.route.as_str(), entry.dataset.as_str(), entry.generation), ("chat", "uniprot", 1));
        let replayed: Vec<(String, Value)> = events_from_turn(&entry.turn, PipelineConfig::default().stream_rows)
            .iter()
            .map(|e| (e.name().to_string(), e.payload()))
            .collect();
        assert_eq!(replayed, live, "{name}");
    }
}
