//! SPARQL query analysis.
//!
//! [`parse_query`] turns query text into a [`ParsedQuery`]: the prologue's
//! prefix map, the query form, the full group-pattern tree (enough to
//! serialize the query back out) and the triple patterns flattened into one
//! [`PatternGroup`] per execution target (the home endpoint plus each
//! `SERVICE` block).

mod ast;
mod lexer;
mod ntriples;
mod parser;
mod patterns;
mod serialize;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::*;
pub use ntriples::parse_ntriples;
pub use patterns::{count_triple_patterns, extract_pattern_groups, GroupTarget, PatternGroup};
pub use serialize::{term_to_string, triple_to_string};

/// Prefixes resolved even when a query does not declare them.
pub const DEFAULT_PREFIXES: &[(&str, &str)] = &[
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("owl", "http://www.w3.org/2002/07/owl#"),
];

pub fn default_prefix(label: &str) -> Option<&'static str> {
    DEFAULT_PREFIXES.iter().find(|(p, _)| *p == label).map(|(_, iri)| *iri)
}

/// A malformed query. The message reads well inside a repair prompt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    /// Byte offset into the query text.
    pub position: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn at(text: &str, position: usize, message: impl Into<String>) -> Self {
        let position = position.min(text.len());
        let before = &text[..position];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        SyntaxError { position, line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuery {
    pub query_type: QueryType,
    pub base: Option<String>,
    /// Prefixes declared in the prologue. See [`DEFAULT_PREFIXES`] for the
    /// ones resolved implicitly.
    pub prefixes: BTreeMap<String, String>,
    pub form: QueryForm,
    pub dataset: Vec<DatasetClause>,
    pub where_clause: GroupPattern,
    pub modifiers: SolutionModifiers,
    pub values: Option<InlineData>,
    /// Empty unless the query is a SELECT.
    pub projected_variables: Vec<String>,
    pub pattern_groups: Vec<PatternGroup>,
}

impl ParsedQuery {
    pub fn resolve_prefix(&self, label: &str) -> Option<&str> {
        self.prefixes.get(label).map(String::as_str).or_else(|| default_prefix(label))
    }

    pub fn triple_count(&self) -> usize {
        count_triple_patterns(self)
    }

    /// IRIs of every `SERVICE` block with a constant endpoint, in source order.
    pub fn service_endpoints(&self) -> Vec<&str> {
        self.pattern_groups
            .iter()
            .filter_map(|g| match &g.target {
                GroupTarget::Service(iri) => Some(iri.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn is_federated(&self) -> bool {
        self.pattern_groups.iter().any(|g| g.target != GroupTarget::Home)
    }
}

impl fmt::Display for ParsedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        serialize::write_query(self, f)
    }
}

/// Parses SPARQL 1.1 query text.
///
/// SPARQL Update requests are rejected with a [`SyntaxError`].
pub fn parse_query(text: &str) -> Result<ParsedQuery, SyntaxError> {
    if text.trim().is_empty() {
        return Err(SyntaxError::at(text, 0, "empty query"));
    }
    parser::parse(text)
}
