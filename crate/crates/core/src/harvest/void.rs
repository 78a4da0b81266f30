//! VoID class/property partitions: reading published ones and generating them.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{select_with_graph_fallback, EndpointDescriptor, HarvestError};
use crate::client::SparqlClient;
use crate::results::Row;
use crate::sparql::RDF_TYPE;

/// One (subject class, predicate, object class or datatype) partition.
/// Both object fields absent means the objects carry no type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawVoidRecord {
    pub subject_class: String,
    pub predicate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_datatype: Option<String>,
    pub triple_count: u64,
    pub subject_instance_count: u64,
}

impl RawVoidRecord {
    /// Identity of the partition, ignoring counts.
    pub fn key(&self) -> (&str, &str, Option<&str>, Option<&str>) {
        (
            &self.subject_class,
            &self.predicate,
            self.object_class.as_deref(),
            self.object_datatype.as_deref(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoidMode {
    /// Exact counts from one aggregate query over the whole dataset.
    Complete,
    /// Bounded probes per class over a sample of its instances.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoidOptions {
    pub mode: VoidMode,
    /// Instances sampled per class and predicates probed per class.
    pub sample_limit: usize,
    /// Generate statistics when the endpoint publishes no VoID.
    pub generate_when_missing: bool,
}

impl Default for VoidOptions {
    fn default() -> Self {
        VoidOptions { mode: VoidMode::Sampled, sample_limit: 100, generate_when_missing: true }
    }
}

const VOID_PREFIXES: &str = "PREFIX void: <http://rdfs.org/ns/void#>
PREFIX voidext: <http://ldf.fi/void-ext#>
";

const VOID_PATTERN: &str = "
    ?cp void:class ?class ;
        void:propertyPartition ?pp .
    ?pp void:property ?prop .
    OPTIONAL { ?pp void:triples ?ppTriples }
    OPTIONAL { ?pp void:distinctSubjects ?ppSubjects }
    OPTIONAL {
      { ?pp void:classPartition ?sub . ?sub void:class ?oc }
      UNION
      { ?pp voidext:datatypePartition ?sub . ?sub voidext:datatype ?dt }
      OPTIONAL { ?sub void:triples ?triples }
      OPTIONAL { ?sub void:distinctSubjects ?subjects }
    }";

/// Reads the endpoint's published VoID class and property partitions. Object
/// classes come from `void:classPartition`, datatypes from
/// `void-ext:datatypePartition`; a property partition without either is an
/// untyped record. Counts of partitions describing the same combination are summed.
pub async fn fetch_void(
    client: &SparqlClient,
    endpoint: &EndpointDescriptor,
) -> Result<Vec<RawVoidRecord>, HarvestError> {
    let rs = select_with_graph_fallback(
        client,
        &endpoint.endpoint_url,
        VOID_PREFIXES,
        "DISTINCT ?cp ?pp ?sub ?class ?prop ?oc ?dt ?triples ?subjects ?ppTriples ?ppSubjects",
        VOID_PATTERN,
    )
    .await?;
    type Key = (String, String, Option<String>, Option<String>);
    let mut merged: BTreeMap<Key, (u64, u64)> = BTreeMap::new();
    for row in &rs.rows {
        let (Some(class), Some(prop)) = (value(row, "class"), value(row, "prop")) else { continue };
        let has_sub = row.contains_key("sub");
        let (oc, dt) = if has_sub { (value(row, "oc"), value(row, "dt")) } else { (None, None) };
        if has_sub && oc.is_none() && dt.is_none() {
            continue;
        }
        let (triples, subjects) = if has_sub {
            (count(row, "triples"), count(row, "subjects"))
        } else {
            (count(row, "ppTriples"), count(row, "ppSubjects"))
        };
        let slot = merged.entry((class, prop, oc, dt)).or_default();
        slot.0 += triples;
        slot.1 += subjects;
    }
    Ok(merged
        .into_iter()
        .map(|((subject_class, predicate, object_class, object_datatype), (t, s))| RawVoidRecord {
            subject_class,
            predicate,
            object_class,
            object_datatype,
            triple_count: t,
            subject_instance_count: s,
        })
        .collect())
}

fn value(row: &Row, var: &str) -> Option<String> {
    row.get(var).map(|t| t.value.clone())
}

fn count(row: &Row, var: &str) -> u64 {
    row.get(var).and_then(|t| t.as_count()).unwrap_or(0)
}

/// Computes VoID partitions by querying the data itself. `rdf:type` triples
/// are not reported as predicates; only subjects with at least one class count.
///
/// Complete mode issues one aggregate query and returns exact counts.
/// Sampled mode lists classes by descending instance count, then for each
/// class probes at most `sample_limit` predicates over its first
/// `sample_limit` instances and asks for object types per predicate: at most
/// `1 + sample_limit` queries per class, every reported combination exists,
/// and counts are lower bounds.
pub async fn generate_void(
    client: &SparqlClient,
    endpoint: &EndpointDescriptor,
    options: &VoidOptions,
) -> Result<Vec<RawVoidRecord>, HarvestError> {
    let url = &endpoint.endpoint_url;
    let mut records = match options.mode {
        VoidMode::Complete => {
            let query = format!(
                "SELECT ?class ?prop ?oc ?dt (COUNT(*) AS ?triples) (COUNT(DISTINCT ?s) AS ?subjects)
WHERE {{
  ?s a ?class .
  ?s ?prop ?o .
  FILTER (isIRI(?class) && ?prop != <{RDF_TYPE}>)
  OPTIONAL {{ ?o a ?oc FILTER (isIRI(?oc)) }}
  BIND (DATATYPE(?o) AS ?dt)
}}
GROUP BY ?class ?prop ?oc ?dt"
            );
            let rs = client.select(url, &query).await?;
            rs.rows
                .iter()
                .filter_map(|row| {
                    Some(RawVoidRecord {
                        subject_class: value(row, "class")?,
                        predicate: value(row, "prop")?,
                        object_class: value(row, "oc"),
                        object_datatype: value(row, "dt"),
                        triple_count: count(row, "triples"),
                        subject_instance_count: count(row, "subjects"),
                    })
                })
                .collect::<Vec<_>>()
        }
        VoidMode::Sampled => sampled(client, url, options.sample_limit.max(1)).await?,
    };
    records.sort();
    Ok(records)
}

async fn sampled(
    client: &SparqlClient,
    url: &str,
    limit: usize,
) -> Result<Vec<RawVoidRecord>, HarvestError> {
    let classes = client
        .select(
            url,
            "SELECT ?class (COUNT(DISTINCT ?s) AS ?n) WHERE { ?s a ?class FILTER (isIRI(?class)) } \
             GROUP BY ?class ORDER BY DESC(?n) ?class",
        )
        .await?;
    let mut out = Vec::new();
    for row in &classes.rows {
        let Some(class) = value(row, "class") else { continue };
        let sample = format!("{{ SELECT ?s WHERE {{ ?s a <{class}> }} ORDER BY ?s LIMIT {limit} }}");
        let predicates = client
            .select(
                url,
                &format!(
                    "SELECT DISTINCT ?prop WHERE {{ {sample} ?s ?prop ?o . \
                     FILTER (?prop != <{RDF_TYPE}>) }} ORDER BY ?prop LIMIT {limit}"
                ),
            )
            .await?;
        for prow in &predicates.rows {
            let Some(prop) = value(prow, "prop") else { continue };
            let types = client
                .select(
                    url,
                    &format!(
                        "SELECT ?oc ?dt (COUNT(*) AS ?triples) (COUNT(DISTINCT ?s) AS ?subjects) \
                         WHERE {{ {sample} ?s <{prop}> ?o . \
                         OPTIONAL {{ ?o a ?oc FILTER (isIRI(?oc)) }} BIND (DATATYPE(?o) AS ?dt) }} \
                         GROUP BY ?oc ?dt"
                    ),
                )
                .await?;
            for trow in &types.rows {
                out.push(RawVoidRecord {
                    subject_class: class.clone(),
                    predicate: prop.clone(),
                    object_class: value(trow, "oc"),
                    object_datatype: value(trow, "dt"),
                    triple_count: count(trow, "triples"),
                    subject_instance_count: count(trow, "subjects"),
                });
            }
        }
    }
    Ok(out)
}

/// Writes records as a VoID Turtle document that [`fetch_void`] reads back
/// to the same records. Untyped records get their own property partition.
pub fn render_void_turtle(records: &[RawVoidRecord], dataset_iri: &str) -> String {
    let mut by_class: BTreeMap<&str, BTreeMap<&str, Vec<&RawVoidRecord>>> = BTreeMap::new();
    for r in records {
        by_class
            .entry(r.subject_class.as_str())
            .or_default()
            .entry(r.predicate.as_str())
            .or_default()
            .push(r);
    }
    let mut out = String::new();
    out.push_str("@prefix void: <http://rdfs.org/ns/void#> .\n");
    out.push_str("@prefix void-ext: <http://ldf.fi/void-ext#> .\n\n");
    let _ = writeln!(out, "<{dataset_iri}> a void:Dataset .");
    for (ci, (class, props)) in by_class.iter().enumerate() {
        let cp = format!("{dataset_iri}#class{ci}");
        let _ = writeln!(out, "<{dataset_iri}> void:classPartition <{cp}> .");
        let _ = writeln!(out, "<{cp}> void:class <{class}> .");
        for (pi, (prop, recs)) in props.iter().enumerate() {
            let typed: Vec<_> =
                recs.iter().filter(|r| r.object_class.is_some() || r.object_datatype.is_some()).collect();
            let untyped: Vec<_> =
                recs.iter().filter(|r| r.object_class.is_none() && r.object_datatype.is_none()).collect();
            if !typed.is_empty() {
                let pp = format!("{cp}-prop{pi}");
                let _ = writeln!(out, "<{cp}> void:propertyPartition <{pp}> .");
                let _ = writeln!(out, "<{pp}> void:property <{prop}> .");
                for (oi, r) in typed.iter().enumerate() {
                    let sub = format!("{pp}-obj{oi}");
                    match (&r.object_class, &r.object_datatype) {
                        (Some(oc), _) => {
                            let _ = writeln!(out, "<{pp}> void:classPartition <{sub}> .");
                            let _ = writeln!(out, "<{sub}> void:class <{oc}> .");
                        }
                        (None, Some(dt)) => {
                            let _ = writeln!(out, "<{pp}> void-ext:datatypePartition <{sub}> .");
                            let _ = writeln!(out, "<{sub}> void-ext:datatype <{dt}> .");
                        }
                        (None, None) => unreachable!(),
                    }
                    let _ = writeln!(
                        out,
                        "<{sub}> void:triples {} ; void:distinctSubjects {} .",
                        r.triple_count, r.subject_instance_count
                    );
                }
            }
            for (ui, r) in untyped.iter().enumerate() {
                let pp = format!("{cp}-prop{pi}-untyped{ui}");
                let _ = writeln!(out, "<{cp}> void:propertyPartition <{pp}> .");
                let _ = writeln!(
                    out,
                    "<{pp}> void:property <{prop}> ; void:triples {} ; void:distinctSubjects {} .",
                    r.triple_count, r.subject_instance_count
                );
            }
        }
    }
    out
}
