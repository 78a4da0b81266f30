//! IRI helpers: local names and prefix compaction.

use std::collections::BTreeMap;

/// Namespaces that get a prefix without being declared anywhere.
pub const WELL_KNOWN_PREFIXES: &[(&str, &str)] = &[
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("owl", "http://www.w3.org/2002/07/owl#"),
    ("skos", "http://www.w3.org/2004/02/skos/core#"),
    ("dcterms", "http://purl.org/dc/terms/"),
    ("foaf", "http://xmlns.com/foaf/0.1/"),
    ("schema", "https://schema.org/"),
    ("sh", "http://www.w3.org/ns/shacl#"),
    ("void", "http://rdfs.org/ns/void#"),
    ("sd", "http://www.w3.org/ns/sparql-service-description#"),
    ("up", "http://purl.uniprot.org/core/"),
    ("taxon", "http://purl.uniprot.org/taxonomy/"),
    ("faldo", "http://biohackathon.org/resource/faldo#"),
    ("dbo", "http://dbpedia.org/ontology/"),
    ("dbr", "http://dbpedia.org/resource/"),
    ("dbp", "http://dbpedia.org/property/"),
];

/// The part of an IRI after its last `#`, `/` or `:`.
pub fn local_name(iri: &str) -> &str {
    let cut = iri.rfind(['#', '/', ':']).map_or(0, |i| i + 1);
    if cut >= iri.len() {
        if iri.len() <= 1 {
            return iri;
        }
        // IRIs ending in a separator: fall back to the preceding segment.
        let trimmed = &iri[..iri.len() - 1];
        return local_name(trimmed);
    }
    &iri[cut..]
}

/// Splits `CamelCase` and `snake_case` local names into words.
pub fn humanize(local: &str) -> String {
    let mut out = String::new();
    let mut prev: Option<char> = None;
    for c in local.chars() {
        if c == '_' || c == '-' {
            if !out.ends_with(' ') && !out.is_empty() {
                out.push(' ');
            }
        } else {
            if c.is_uppercase()
                && prev.is_some_and(|p| p.is_lowercase() || p.is_ascii_digit())
                && !out.ends_with(' ')
            {
                out.push(' ');
            }
            out.push(c);
        }
        prev = Some(c);
    }
    out.trim().to_string()
}

/// Bidirectional prefix table, most specific namespace wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixMap {
    by_prefix: BTreeMap<String, String>,
}

impl Default for PrefixMap {
    fn default() -> Self {
        PrefixMap {
            by_prefix: WELL_KNOWN_PREFIXES
                .iter()
                .map(|(p, ns)| (p.to_string(), ns.to_string()))
                .collect(),
        }
    }
}

impl PrefixMap {
    pub fn empty() -> Self {
        PrefixMap { by_prefix: BTreeMap::new() }
    }

    /// Adds a prefix unless the label or the namespace is already taken.
    pub fn add(&mut self, prefix: &str, namespace: &str) {
        if self.by_prefix.contains_key(prefix) || self.by_prefix.values().any(|ns| ns == namespace) {
            return;
        }
        self.by_prefix.insert(prefix.to_string(), namespace.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_prefix.iter().map(|(p, ns)| (p.as_str(), ns.as_str()))
    }

    pub fn namespace(&self, prefix: &str) -> Option<&str> {
        self.by_prefix.get(prefix).map(String::as_str)
    }

    /// `(prefix, local)` for the longest matching namespace whose remainder
    /// is a legal prefixed-name local part.
    pub fn split<'a>(&'a self, iri: &'a str) -> Option<(&'a str, &'a str)> {
        self.by_prefix
            .iter()
            .filter(|(_, ns)| iri.len() > ns.len() && iri.starts_with(ns.as_str()))
            .filter(|(_, ns)| is_plain_local(&iri[ns.len()..]))
            .max_by_key(|(_, ns)| ns.len())
            .map(|(p, ns)| (p.as_str(), &iri[ns.len()..]))
    }

    /// `prefix:local` when possible, else `<iri>`.
    pub fn compact(&self, iri: &str) -> String {
        match self.split(iri) {
            Some((p, local)) => format!("{p}:{local}"),
            None => format!("<{iri}>"),
        }
    }

    /// Reverses [`PrefixMap::compact`].
    pub fn expand(&self, text: &str) -> Option<String> {
        if let Some(iri) = text.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
            return Some(iri.to_string());
        }
        let (prefix, local) = text.split_once(':')?;
        Some(format!("{}{local}", self.namespace(prefix)?))
    }
}

fn is_plain_local(local: &str) -> bool {
    !local.is_empty()
        && local.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-')
        && !local.starts_with('-')
}
