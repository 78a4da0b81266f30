//! SPARQL result sets in the shape of the SPARQL 1.1 JSON results format.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sparql::{Term, XSD_BOOLEAN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermKind {
    #[serde(rename = "uri")]
    Iri,
    #[serde(rename = "literal", alias = "typed-literal")]
    Literal,
    #[serde(rename = "bnode")]
    Blank,
}

/// One bound value. Serializes exactly like a binding in SPARQL JSON results.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RdfTerm {
    #[serde(rename = "type")]
    pub kind: TermKind,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
    #[serde(rename = "xml:lang", default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl RdfTerm {
    pub fn iri(value: impl Into<String>) -> Self {
        RdfTerm { kind: TermKind::Iri, value: value.into(), datatype: None, language: None }
    }

    pub fn literal(value: impl Into<String>) -> Self {
        RdfTerm { kind: TermKind::Literal, value: value.into(), datatype: None, language: None }
    }

    pub fn typed(value: impl Into<String>, datatype: impl Into<String>) -> Self {
        RdfTerm {
            kind: TermKind::Literal,
            value: value.into(),
            datatype: Some(datatype.into()),
            language: None,
        }
    }

    pub fn lang(value: impl Into<String>, language: impl Into<String>) -> Self {
        RdfTerm {
            kind: TermKind::Literal,
            value: value.into(),
            datatype: None,
            language: Some(language.into()),
        }
    }

    pub fn blank(label: impl Into<String>) -> Self {
        RdfTerm { kind: TermKind::Blank, value: label.into(), datatype: None, language: None }
    }

    pub fn is_iri(&self) -> bool {
        self.kind == TermKind::Iri
    }

    pub fn is_literal(&self) -> bool {
        self.kind == TermKind::Literal
    }

    /// Literal lexical form parsed as an unsigned count.
    pub fn as_count(&self) -> Option<u64> {
        self.value.trim().parse().ok()
    }

    /// The term as a ground SPARQL term.
    pub fn to_term(&self) -> Term {
        match self.kind {
            TermKind::Iri => Term::Iri(self.value.clone()),
            TermKind::Blank => Term::BlankNode(self.value.clone()),
            TermKind::Literal => Term::Literal(crate::sparql::Literal {
                value: self.value.clone(),
                datatype: self.datatype.clone(),
                language: self.language.clone(),
            }),
        }
    }

    pub fn from_term(term: &Term) -> Option<Self> {
        match term {
            Term::Iri(i) => Some(RdfTerm::iri(i)),
            Term::BlankNode(b) => Some(RdfTerm::blank(b)),
            Term::Literal(l) => Some(RdfTerm {
                kind: TermKind::Literal,
                value: l.value.clone(),
                datatype: l.datatype.clone(),
                language: l.language.clone(),
            }),
            Term::Variable(_) | Term::Path(_) => None,
        }
    }
}

impl fmt::Display for RdfTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TermKind::Iri => write!(f, "<{}>", self.value),
            TermKind::Blank => write!(f, "_:{}", self.value),
            TermKind::Literal => {
                write!(f, "{:?}", self.value)?;
                if let Some(l) = &self.language {
                    write!(f, "@{l}")
                } else if let Some(dt) = &self.datatype {
                    write!(f, "^^<{dt}>")
                } else {
                    Ok(())
                }
            }
        }
    }
}

pub type Row = BTreeMap<String, RdfTerm>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultSet {
    pub variables: Vec<String>,
    pub rows: Vec<Row>,
    /// Set for ASK results; the same value is also exposed as a one-row
    /// binding of `?boolean` so that ASK results can be compared like any other.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boolean: Option<bool>,
    #[serde(default)]
    pub truncated: bool,
    /// Home endpoint first, then every SERVICE endpoint the query names.
    #[serde(default)]
    pub origin: Vec<String>,
}

impl ResultSet {
    pub fn from_boolean(value: bool) -> Self {
        let mut row = Row::new();
        row.insert("boolean".into(), RdfTerm::typed(value.to_string(), XSD_BOOLEAN));
        ResultSet {
            variables: vec!["boolean".into()],
            rows: vec![row],
            boolean: Some(value),
            truncated: false,
            origin: Vec::new(),
        }
    }

    pub fn from_triples(triples: &[(Term, Term, Term)]) -> Self {
        let variables: Vec<String> = ["subject", "predicate", "object"].map(String::from).to_vec();
        let rows = triples
            .iter()
            .map(|(s, p, o)| {
                variables
                    .iter()
                    .zip([s, p, o])
                    .filter_map(|(v, t)| RdfTerm::from_term(t).map(|t| (v.clone(), t)))
                    .collect()
            })
            .collect();
        ResultSet { variables, rows, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps at most `max_rows` rows, setting `truncated` when rows were dropped.
    pub fn truncate(&mut self, max_rows: usize) {
        if self.rows.len() > max_rows {
            self.rows.truncate(max_rows);
            self.truncated = true;
        }
    }

    /// Plain-text table, one line per row, values in variable order.
    pub fn to_table(&self, max_rows: usize) -> String {
        let mut out = self.variables.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join("\t");
        for row in self.rows.iter().take(max_rows) {
            out.push('\n');
            let cells: Vec<String> = self
                .variables
                .iter()
                .map(|v| row.get(v).map(|t| t.value.clone()).unwrap_or_default())
                .collect();
            out.push_str(&cells.join("\t"));
        }
        out
    }

    /// Parses a SPARQL 1.1 JSON results document (SELECT or ASK).
    pub fn from_sparql_json(body: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(default)]
            head: Head,
            #[serde(default)]
            results: Option<Bindings>,
            #[serde(default)]
            boolean: Option<bool>,
        }
        #[derive(Deserialize, Default)]
        struct Head {
            #[serde(default)]
            vars: Vec<String>,
        }
        #[derive(Deserialize)]
        struct Bindings {
            bindings: Vec<Row>,
        }
        let doc: Doc = serde_json::from_str(body)?;
        if let Some(b) = doc.boolean {
            return Ok(ResultSet::from_boolean(b));
        }
        Ok(ResultSet {
            variables: doc.head.vars,
            rows: doc.results.map(|r| r.bindings).unwrap_or_default(),
            ..Default::default()
        })
    }

    /// Writes the SPARQL 1.1 JSON results document for this result set.
    pub fn to_sparql_json(&self) -> serde_json::Value {
        match self.boolean {
            Some(b) => serde_json::json!({ "head": {}, "boolean": b }),
            None => serde_json::json!({
                "head": { "vars": self.variables },
                "results": { "bindings": self.rows },
            }),
        }
    }
}
