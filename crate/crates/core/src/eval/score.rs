//! Result-based precision, recall and F1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::results::{RdfTerm, ResultSet, Row, TermKind};

const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSemantics {
    /// Duplicate rows count as many times as they occur.
    #[default]
    Multiset,
    /// Rows are deduplicated first, as if both queries were `SELECT DISTINCT`.
    Set,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Rows are matched by variable name only when both sides project
    /// exactly the same variables.
    #[default]
    Strict,
    /// Also matches by name when the generated query projects the
    /// reference variables plus extra ones; the extras are ignored.
    Lenient,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub semantics: RowSemantics,
    pub projection: Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Score {
    pub const ZERO: Score = Score { precision: 0.0, recall: 0.0, f1: 0.0 };
    pub const PERFECT: Score = Score { precision: 1.0, recall: 1.0, f1: 1.0 };
}

/// Harmonic mean, 0 when both are 0.
pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// A term reduced to what the comparison looks at. Literals keep their
/// value and datatype (plain literals are `xsd:string`, tagged ones
/// `rdf:langString` plus the lowercased tag). Blank node labels are
/// meaningless across result sets, so all blank nodes compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CanonicalTerm {
    Iri(String),
    Literal { value: String, datatype: String },
    Blank,
}

pub fn canonical_term(term: &RdfTerm) -> CanonicalTerm {
    match term.kind {
        TermKind::Iri => CanonicalTerm::Iri(term.value.clone()),
        TermKind::Blank => CanonicalTerm::Blank,
        TermKind::Literal => {
            if let Some(lang) = &term.language {
                return CanonicalTerm::Literal {
                    value: term.value.clone(),
                    datatype: format!("{RDF_LANG_STRING}@{}", lang.to_ascii_lowercase()),
                };
            }
            let datatype = term.datatype.clone().unwrap_or_else(|| XSD_STRING.to_string());
            let value = canonical_lexical(&term.value, &datatype).unwrap_or_else(|| term.value.clone());
            CanonicalTerm::Literal { value, datatype }
        }
    }
}

fn canonical_lexical(value: &str, datatype: &str) -> Option<String> {
    let local = datatype.strip_prefix(XSD)?;
    let v = value.trim();
    match local {
        "integer" | "int" | "long" | "short" | "byte" | "nonNegativeInteger" | "positiveInteger"
        | "nonPositiveInteger" | "negativeInteger" | "unsignedLong" | "unsignedInt" | "unsignedShort"
        | "unsignedByte" => v.parse::<i128>().ok().map(|n| n.to_string()),
        "decimal" | "double" | "float" => v.parse::<f64>().ok().map(|n| n.to_string()),
        "boolean" => match v {
            "true" | "1" => Some("true".into()),
            "false" | "0" => Some("false".into()),
            _ => None,
        },
        _ => None,
    }
}

type RowKey = Vec<Option<CanonicalTerm>>;

/// Variables to match rows by name, or `None` to compare each row as the
/// sorted list of its bound values.
fn shared_projection(reference: &ResultSet, generated: &ResultSet, options: &ScoreOptions) -> Option<Vec<String>> {
    let r: BTreeSet<&String> = reference.variables.iter().collect();
    let g: BTreeSet<&String> = generated.variables.iter().collect();
    let by_name = r == g || (options.projection == Projection::Lenient && r.is_subset(&g));
    by_name.then(|| reference.variables.clone())
}

fn row_key(row: &Row, projection: Option<&[String]>) -> RowKey {
    match projection {
        Some(vars) => vars.iter().map(|v| row.get(v).map(canonical_term)).collect(),
        None => {
            let mut values: Vec<CanonicalTerm> = row.values().map(canonical_term).collect();
            values.sort();
            values.into_iter().map(Some).collect()
        }
    }
}

fn counts(rs: &ResultSet, projection: Option<&[String]>, semantics: RowSemantics) -> BTreeMap<RowKey, usize> {
    let mut out = BTreeMap::new();
    for row in &rs.rows {
        let n = out.entry(row_key(row, projection)).or_insert(0);
        *n = match semantics {
            RowSemantics::Multiset => *n + 1,
            RowSemantics::Set => 1,
        };
    }
    out
}

/// Canonical rows of both sides, as compared by [`score_f1`].
pub fn canonical_rows(
    reference: &ResultSet,
    generated: &ResultSet,
    options: &ScoreOptions,
) -> (BTreeMap<RowKey, usize>, BTreeMap<RowKey, usize>) {
    let projection = shared_projection(reference, generated, options);
    (
        counts(reference, projection.as_deref(), options.semantics),
        counts(generated, projection.as_deref(), options.semantics),
    )
}

/// Compares two result sets row by row.
///
/// Precision is the overlap over the generated rows, recall the overlap
/// over the reference rows. Two empty result sets score 1.
pub fn score_f1(reference: &ResultSet, generated: &ResultSet, options: &ScoreOptions) -> Score {
    let (r, g) = canonical_rows(reference, generated, options);
    let r_total: usize = r.values().sum();
    let g_total: usize = g.values().sum();
    if r_total == 0 && g_total == 0 {
        return Score::PERFECT;
    }
    let overlap: usize = r.iter().map(|(k, n)| (*n).min(g.get(k).copied().unwrap_or(0))).sum();
    let ratio = |total: usize| if total == 0 { 0.0 } else { overlap as f64 / total as f64 };
    let precision = ratio(g_total);
    let recall = ratio(r_total);
    Score { precision, recall, f1: harmonic_mean(precision, recall) }
}
