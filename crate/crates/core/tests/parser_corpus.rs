use std::time::Instant;

use serde_json::Value;
use sparqlgen_core::sparql::{parse_query, GroupTarget, QueryType};
use sparqlgen_testkit::read_fixture;

const CORPORA: &[&str] = &["kgqa_corpus.jsonl", "bio_corpus.jsonl", "bio_conformant.jsonl"];

fn load(name: &str) -> Vec<Value> {
    read_fixture(name).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn corpora_parse_round_trip_and_count_exactly() {
    let started = Instant::now();
    let mut total = 0;
    let (mut asks, mut federated, mut paths) = (0, 0, 0);
    for name in CORPORA {
        for entry in load(name) {
            let text = entry["sparql"].as_str().unwrap();
            let q = parse_query(text).unwrap_or_else(|e| panic!("{}: {e}", entry["id"]));
            let printed = q.to_string();
            let again = parse_query(&printed).unwrap_or_else(|e| panic!("{}: {e}\n{printed}", entry["id"]));
            assert_eq!(q.pattern_groups, again.pattern_groups, "{}", entry["id"]);
            assert_eq!(q.where_clause, again.where_clause, "{}", entry["id"]);
            assert_eq!(q.query_type, again.query_type);
            assert_eq!(printed, again.to_string(), "printing is a fixed point");
            assert_eq!(q.triple_count() as u64, entry["expected_triples"].as_u64().unwrap(), "{}", entry["id"]);
            total += 1;
            asks += usize::from(q.query_type == QueryType::Ask);
            federated += usize::from(q.pattern_groups.iter().any(|g| matches!(g.target, GroupTarget::Service(_))));
            paths += usize::from(text.contains('+') || text.contains("/dbo:"));
            for kw in ["OPTIONAL", "UNION"] {
                if text.contains(kw) {
                    assert!(printed.contains(kw), "{} lost {kw}", entry["id"]);
                }
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(total >= 30);
    assert!(asks >= 3 && federated >= 3 && paths >= 2);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

#[test]
fn error_analysis_queries_are_verbatim() {
    let corpus = load("kgqa_corpus.jsonl");
    let bodies = [
        "SELECT DISTINCT ?country WHERE {\n    ?country dbo:populationTotal ?population .\n} ORDER BY DESC(?population) LIMIT 1",
        "SELECT DISTINCT ?country  WHERE {\n    ?country rdf:type dbo:Country ;\n    dbo:populationTotal ?population\n} ORDER BY DESC(?population) LIMIT 1",
        "SELECT DISTINCT ?d  WHERE {\n    dbr:Apollo_11 dbo:launchDate ?d .\n}",
        "SELECT ?date  WHERE {\n    dbr:Apollo_11 dbo:landingDate ?date .\n}",
    ];
    for body in bodies {
        assert!(corpus.iter().any(|e| e["sparql"].as_str().unwrap().ends_with(body)), "{body}");
    }
}
