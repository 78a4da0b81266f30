use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use oxigraph::model::{Term as OxTerm, TermRef};
use oxigraph::store::Store;
use sparqlgen_core::client::{ClientError, ClientOptions, SparqlClient};
use sparqlgen_core::harvest::{
    fetch_endpoint_description, fetch_examples, fetch_void, generate_void, harvest_endpoint,
    render_void_turtle, require_examples, EndpointDescriptor, HarvestCache, HarvestError,
    HarvestOptions, RawVoidRecord, VoidMode, VoidOptions, VoidSource,
};
use sparqlgen_testkit::{read_fixture, store_from_fixtures, store_from_trig, FixtureEndpoint};

const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

type Key = (String, String, Option<String>, Option<String>);

/// Walks every triple of the store and tallies partitions directly.
fn brute_force_void(store: &Store) -> Vec<RawVoidRecord> {
    let quads: Vec<_> = store.iter().map(|q| q.unwrap()).collect();
    let mut classes: HashMap<OxTerm, BTreeSet<String>> = HashMap::new();
    for q in &quads {
        if q.predicate.as_str() == RDF_TYPE {
            if let OxTerm::NamedNode(c) = &q.object {
                classes.entry(q.subject.clone().into()).or_default().insert(c.as_str().to_string());
            }
        }
    }
    let mut tallies: BTreeMap<Key, (u64, HashSet<OxTerm>)> = BTreeMap::new();
    for q in &quads {
        if q.predicate.as_str() == RDF_TYPE {
            continue;
        }
        let subject: OxTerm = q.subject.clone().into();
        let Some(subject_classes) = classes.get(&subject) else { continue };
        let mut objects: Vec<(Option<String>, Option<String>)> = Vec::new();
        match q.object.as_ref() {
            TermRef::Literal(l) => objects.push((None, Some(l.datatype().as_str().to_string()))),
            _ => match classes.get(&q.object) {
                Some(ocs) => objects.extend(ocs.iter().map(|c| (Some(c.clone()), None))),
                None => objects.push((None, None)),
            },
        }
        for c in subject_classes {
            for (oc, dt) in &objects {
                let slot = tallies
                    .entry((c.clone(), q.predicate.as_str().to_string(), oc.clone(), dt.clone()))
                    .or_default();
                slot.0 += 1;
                slot.1.insert(subject.clone());
            }
        }
    }
    tallies
        .into_iter()
        .map(|((subject_class, predicate, object_class, object_datatype), (t, s))| RawVoidRecord {
            subject_class,
            predicate,
            object_class,
            object_datatype,
            triple_count: t,
            subject_instance_count: s.len() as u64,
        })
        .collect()
}

fn fast_client() -> SparqlClient {
    SparqlClient::new(ClientOptions {
        timeout: Duration::from_secs(5),
        retries: 0,
        backoff: Duration::from_millis(10),
        ..ClientOptions::default()
    })
}

#[tokio::test]
async fn complete_void_matches_brute_force_oracle() {
    let store = store_from_fixtures(&["toy.ttl"]);
    let oracle = brute_force_void(&store);
    assert!(oracle.len() > 10);
    let ep = FixtureEndpoint::start(store).await;
    let client = fast_client();
    let started = Instant::now();
    let complete = generate_void(
        &client,
        &EndpointDescriptor::new(&ep.url),
        &VoidOptions { mode: VoidMode::Complete, ..VoidOptions::default() },
    )
    .await
    .unwrap();
    assert_eq!(complete, oracle);
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[tokio::test]
async fn sampled_void_is_a_lower_bound_of_complete() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy.ttl"])).await;
    let client = fast_client();
    let desc = EndpointDescriptor::new(&ep.url);
    let complete = generate_void(
        &client,
        &desc,
        &VoidOptions { mode: VoidMode::Complete, ..VoidOptions::default() },
    )
    .await
    .unwrap();
    for limit in [1, 2, 3, 100] {
        let sampled = generate_void(
            &client,
            &desc,
            &VoidOptions { mode: VoidMode::Sampled, sample_limit: limit, ..VoidOptions::default() },
        )
        .await
        .unwrap();
        assert!(!sampled.is_empty());
        for r in &sampled {
            let c = complete.iter().find(|c| c.key() == r.key()).unwrap_or_else(|| panic!("{r:?} not in complete"));
            assert!(r.triple_count <= c.triple_count && r.subject_instance_count <= c.subject_instance_count);
        }
        if limit == 100 {
            assert_eq!(sampled, complete, "a sample covering every instance is exact");
        }
    }
}

#[tokio::test]
async fn sampled_void_query_budget() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy.ttl"])).await;
    let client = fast_client();
    let limit = 2;
    generate_void(
        &client,
        &EndpointDescriptor::new(&ep.url),
        &VoidOptions { mode: VoidMode::Sampled, sample_limit: limit, ..VoidOptions::default() },
    )
    .await
    .unwrap();
    // 6 classes in the toy dataset
    assert!(ep.queries_received() <= 1 + 6 * (1 + limit as u64));
}

#[tokio::test]
async fn rendered_void_reads_back_identically() {
    let store = store_from_fixtures(&["toy.ttl"]);
    let records = brute_force_void(&store);
    let turtle = render_void_turtle(&records, "http://example.org/toy/void");
    let ep = FixtureEndpoint::from_turtle(&turtle).await;
    let fetched = fetch_void(&fast_client(), &EndpointDescriptor::new(&ep.url)).await.unwrap();
    assert_eq!(fetched, records);
}

#[tokio::test]
async fn published_void_counts_are_summed_per_combination() {
    let turtle = "@prefix void: <http://rdfs.org/ns/void#> .
<http://d/cp1> void:class <http://d/A> ; void:propertyPartition <http://d/pp1> , <http://d/pp2> .
<http://d/pp1> void:property <http://d/p> ; void:classPartition [ void:class <http://d/B> ; void:triples 3 ; void:distinctSubjects 2 ] .
<http://d/pp2> void:property <http://d/p> ; void:classPartition [ void:class <http://d/B> ; void:triples 4 ; void:distinctSubjects 1 ] .
<http://d/cp2> void:class <http://d/A> ; void:propertyPartition [ void:property <http://d/q> ; void:triples 9 ; void:distinctSubjects 5 ] .
";
    let ep = FixtureEndpoint::from_turtle(turtle).await;
    let fetched = fetch_void(&fast_client(), &EndpointDescriptor::new(&ep.url)).await.unwrap();
    assert_eq!(
        fetched,
        vec![
            RawVoidRecord {
                subject_class: "http://d/A".into(),
                predicate: "http://d/p".into(),
                object_class: Some("http://d/B".into()),
                object_datatype: None,
                triple_count: 7,
                subject_instance_count: 3,
            },
            RawVoidRecord {
                subject_class: "http://d/A".into(),
                predicate: "http://d/q".into(),
                object_class: None,
                object_datatype: None,
                triple_count: 9,
                subject_instance_count: 5,
            },
        ]
    );
}

#[tokio::test]
async fn examples_are_harvested_with_quarantine_and_language_choice() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy.ttl", "toy_catalog.ttl"])).await;
    let client = fast_client();
    let desc = EndpointDescriptor::new(&ep.url);
    let harvested = fetch_examples(&client, &desc, "en").await.unwrap();
    let ids: Vec<_> = harvested.usable.iter().map(|e| e.id.rsplit('/').next().unwrap()).collect();
    assert_eq!(ids, ["1", "2", "3", "5"]);
    assert_eq!(harvested.usable[0].question, "Who works for ACME?");
    assert_eq!(harvested.usable[0].language_tag, "en");
    assert_eq!(harvested.usable[2].language_tag, "fr");
    assert!(harvested.usable.iter().all(|e| e.endpoint_url == ep.url && e.parsed().is_some()));
    assert_eq!(harvested.quarantined.len(), 1);
    assert!(harvested.quarantined[0].id.ends_with("/4"));

    let spanish = fetch_examples(&client, &desc, "es").await.unwrap();
    assert_eq!(spanish.usable[0].question, "¿Quién trabaja para ACME?");

    let again = fetch_examples(&client, &desc, "en").await.unwrap();
    assert_eq!(again, harvested);
}

#[tokio::test]
async fn examples_in_named_graphs_are_found() {
    let trig = r#"@prefix sh: <http://www.w3.org/ns/shacl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
<http://g/examples> {
  <http://q/1> a sh:SPARQLExecutable ; rdfs:comment "Anything?" ; sh:ask "ASK { ?s ?p ?o }" .
}"#;
    let ep = FixtureEndpoint::start(store_from_trig(trig)).await;
    let harvested = fetch_examples(&fast_client(), &EndpointDescriptor::new(&ep.url), "en").await.unwrap();
    assert_eq!(harvested.usable.len(), 1);
    assert_eq!(harvested.usable[0].language_tag, "");
    assert_eq!(ep.queries_received(), 2);
}

#[tokio::test]
async fn description_prefers_requested_language() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy_catalog.ttl"])).await;
    let client = fast_client();
    let en = fetch_endpoint_description(&client, &EndpointDescriptor::new(&ep.url), "en").await.unwrap();
    assert_eq!(en.label, "Toy knowledge graph");
    assert!(en.metadata_status.has_description);
    let fr = fetch_endpoint_description(&client, &EndpointDescriptor::new(&ep.url), "fr").await.unwrap();
    assert_eq!(fr.label, "Graphe jouet");
    assert_eq!(fr.description, "Personnes, entreprises et projets.");
}

#[tokio::test]
async fn harvest_generates_void_when_none_is_published_and_caches() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy.ttl", "toy_catalog.ttl"])).await;
    let client = fast_client();
    let options = HarvestOptions {
        void: VoidOptions { mode: VoidMode::Complete, ..VoidOptions::default() },
        ..HarvestOptions::default()
    };
    let record = harvest_endpoint(&client, &EndpointDescriptor::new(&ep.url), &options).await.unwrap();
    assert_eq!(record.void_source, VoidSource::Generated);
    assert!(record.endpoint.metadata_status.has_examples);
    assert!(!record.endpoint.metadata_status.has_void);
    assert!(record.endpoint.metadata_status.has_description);
    assert_eq!(record.examples.usable.len(), 4);
    require_examples(&record).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cache = HarvestCache::new(dir.path());
    cache.save(&record).unwrap();
    let loaded = cache.load_latest(&ep.url).unwrap().unwrap();
    assert_eq!(loaded, record);
    assert!(cache.load_latest("http://elsewhere/sparql").unwrap().is_none());
}

#[tokio::test]
async fn endpoint_without_examples_is_reported_missing() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy.ttl"])).await;
    let options = HarvestOptions {
        void: VoidOptions { generate_when_missing: false, ..VoidOptions::default() },
        ..HarvestOptions::default()
    };
    let record = harvest_endpoint(&fast_client(), &EndpointDescriptor::new(&ep.url), &options).await.unwrap();
    assert_eq!(record.void_source, VoidSource::None);
    assert!(matches!(require_examples(&record), Err(HarvestError::MetadataMissing { .. })));
}

#[tokio::test]
async fn transient_failures_are_retried_and_fatal_ones_surface() {
    let ep = FixtureEndpoint::start(store_from_fixtures(&["toy_catalog.ttl"])).await;
    let client = SparqlClient::new(ClientOptions {
        retries: 2,
        backoff: Duration::from_millis(1),
        ..ClientOptions::default()
    });
    ep.fail_next(2, 503);
    let harvested = fetch_examples(&client, &EndpointDescriptor::new(&ep.url), "en").await.unwrap();
    assert_eq!(harvested.usable.len(), 4);

    ep.fail_next(1, 400);
    let err = fetch_examples(&client, &EndpointDescriptor::new(&ep.url), "en").await.unwrap_err();
    assert!(matches!(err, HarvestError::Endpoint(ClientError::Http { status: 400, .. })));
}

#[tokio::test]
async fn unreachable_endpoint_is_an_error() {
    let client = SparqlClient::new(ClientOptions { retries: 0, ..ClientOptions::default() });
    let err = fetch_examples(&client, &EndpointDescriptor::new("http://127.0.0.1:9/sparql"), "en")
        .await
        .unwrap_err();
    assert!(matches!(err, HarvestError::Endpoint(ClientError::Unreachable { .. })));
}

#[test]
fn toy_fixture_is_small() {
    let n = store_from_fixtures(&["toy.ttl"]).len().unwrap();
    assert!((45..=60).contains(&n), "{n} triples");
    assert!(read_fixture("toy.ttl").contains("ex:untypedThing"));
}
