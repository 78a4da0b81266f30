//! Schema compliance checks for generated queries, and the repair prompt
//! built from their findings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::iri::local_name;
use crate::schema::ClassPropertyMatrix;
use crate::sparql::{term_to_string, GroupTarget, ParsedQuery, Term, TriplePattern, RDF_TYPE};

/// Alternatives further than this (normalized edit distance on local names)
/// are not suggested.
pub const MAX_SUGGESTION_DISTANCE: f64 = 0.5;
pub const DEFAULT_SUGGESTION_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    UnknownClass,
    UnknownPredicate,
    PredicateNotOnClass,
    ObjectTypeMismatch,
    UnknownEndpoint,
}

/// The triple pattern an issue refers to, as SPARQL terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueLocation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    /// Endpoint whose schema was applied.
    pub endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub kind: IssueKind,
    /// The offending IRI.
    pub iri: String,
    pub message: String,
    pub alternatives: Vec<String>,
    pub location: IssueLocation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub issues: Vec<ValidationIssue>,
    /// Patterns that were not checked, e.g. property paths.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ValidationReport {
    fn finish(issues: Vec<ValidationIssue>, notes: Vec<String>) -> Self {
        let passed = issues.iter().all(|i| i.severity != Severity::Error);
        ValidationReport { passed, issues, notes }
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }
}

fn normalized_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Ranks `candidates` (IRI, schema frequency) by normalized Levenshtein
/// distance between local names, then descending frequency, then IRI.
/// Candidates further than [`MAX_SUGGESTION_DISTANCE`] are dropped.
pub fn suggest_alternatives<'a>(
    bad_iri: &str,
    candidates: impl IntoIterator<Item = (&'a str, u64)>,
    limit: usize,
) -> Vec<String> {
    let bad = local_name(bad_iri);
    let mut ranked: Vec<(f64, u64, &str)> = candidates
        .into_iter()
        .map(|(iri, freq)| (normalized_distance(bad, local_name(iri)), freq, iri))
        .filter(|(d, _, _)| *d <= MAX_SUGGESTION_DISTANCE)
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then_with(|| a.2.cmp(b.2)));
    ranked.dedup_by(|a, b| a.2 == b.2);
    ranked.into_iter().take(limit.max(1)).map(|(_, _, iri)| iri.to_string()).collect()
}

fn term_key(t: &Term) -> Option<String> {
    match t {
        Term::Variable(v) => Some(format!("?{v}")),
        Term::BlankNode(b) => Some(format!("_:{b}")),
        _ => None,
    }
}

struct GroupCheck<'a> {
    schema: &'a ClassPropertyMatrix,
    endpoint: &'a str,
    severity: Severity,
    /// Classes of variables, from `?x a <C>` patterns in the group.
    classes: HashMap<String, BTreeSet<&'a str>>,
    issues: Vec<ValidationIssue>,
}

impl<'a> GroupCheck<'a> {
    fn issue(&mut self, t: &TriplePattern, kind: IssueKind, severity: Severity, iri: &str, message: String, alternatives: Vec<String>) {
        self.issues.push(ValidationIssue {
            severity,
            kind,
            iri: iri.to_string(),
            message,
            alternatives,
            location: IssueLocation {
                subject: term_to_string(&t.subject),
                predicate: term_to_string(&t.predicate),
                object: term_to_string(&t.object),
                endpoint: self.endpoint.to_string(),
            },
        });
    }

    fn check(&mut self, t: &TriplePattern) {
        let Term::Iri(predicate) = &t.predicate else { return };
        if predicate == RDF_TYPE {
            if let Term::Iri(class) = &t.object {
                if !self.schema.has_class(class) {
                    let alternatives =
                        suggest_alternatives(class, self.schema.classes().iter().map(|(c, w)| (c.as_str(), *w)), DEFAULT_SUGGESTION_LIMIT);
                    self.issue(t, IssueKind::UnknownClass, self.severity, class, format!(
                        "Class <{class}> does not exist in the schema of {}.", self.endpoint
                    ), alternatives);
                }
            }
            return;
        }
        if !self.schema.has_predicate(predicate) {
            let candidates = self.schema.predicates().iter().map(|(p, w)| (p.as_str(), *w));
            let alternatives = suggest_alternatives(predicate, candidates, DEFAULT_SUGGESTION_LIMIT);
            self.issue(t, IssueKind::UnknownPredicate, self.severity, predicate, format!(
                "Predicate <{predicate}> does not exist in the schema of {}.", self.endpoint
            ), alternatives);
            return;
        }
        let subject_classes: Vec<&str> = term_key(&t.subject)
            .and_then(|k| self.classes.get(&k))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        if subject_classes.is_empty() {
            return;
        }
        let cells: Vec<_> = subject_classes
            .iter()
            .filter_map(|c| self.schema.cell(c, predicate).map(|cell| (*c, cell)))
            .collect();
        if cells.is_empty() {
            let mut row_predicates: BTreeMap<&str, u64> = BTreeMap::new();
            for c in &subject_classes {
                for (p, cell) in self.schema.row(c) {
                    *row_predicates.entry(p).or_default() += cell.triple_count;
                }
            }
            let alternatives = suggest_alternatives(predicate, row_predicates, DEFAULT_SUGGESTION_LIMIT);
            let names: Vec<String> = subject_classes.iter().map(|c| format!("<{c}>")).collect();
            let subject = term_to_string(&t.subject);
            self.issue(t, IssueKind::PredicateNotOnClass, self.severity, predicate, format!(
                "Predicate <{predicate}> is not used with {subject} of class {} in {}.",
                names.join(" or "), self.endpoint
            ), alternatives);
            return;
        }
        self.check_object(t, predicate, &cells);
    }

    fn check_object(&mut self, t: &TriplePattern, predicate: &str, cells: &[(&str, &crate::schema::CellConstraint)]) {
        let datatypes: BTreeSet<&str> =
            cells.iter().flat_map(|(_, c)| c.object_datatypes.iter().map(String::as_str)).collect();
        let accepts_resources = cells.iter().any(|(_, c)| c.untyped || !c.object_classes.is_empty());
        let object_classes: BTreeSet<&str> =
            cells.iter().flat_map(|(_, c)| c.object_classes.iter().map(String::as_str)).collect();
        match &t.object {
            Term::Literal(lit) => {
                let dt = lit.effective_datatype();
                if !datatypes.contains(dt) {
                    let expected = if datatypes.is_empty() {
                        "resources, not literals".to_string()
                    } else {
                        datatypes.iter().map(|d| format!("<{d}>")).collect::<Vec<_>>().join(", ")
                    };
                    self.issue(t, IssueKind::ObjectTypeMismatch, Severity::Warning, predicate, format!(
                        "Predicate <{predicate}> has a literal of type <{dt}> as object, but the schema expects {expected}."
                    ), datatypes.iter().map(|d| d.to_string()).collect());
                }
            }
            Term::Iri(_) if !accepts_resources && !datatypes.is_empty() => {
                self.issue(t, IssueKind::ObjectTypeMismatch, Severity::Warning, predicate, format!(
                    "Predicate <{predicate}> points to literals in the schema, but the query gives it a resource as object."
                ), Vec::new());
            }
            object => {
                let Some(key) = term_key(object) else { return };
                let Some(known) = self.classes.get(&key) else { return };
                let untyped = cells.iter().any(|(_, c)| c.untyped);
                if !untyped && !object_classes.is_empty() && known.is_disjoint(&object_classes) {
                    let alternatives: Vec<String> = object_classes.iter().map(|c| c.to_string()).collect();
                    let given: Vec<String> = known.iter().map(|c| format!("<{c}>")).collect();
                    self.issue(t, IssueKind::ObjectTypeMismatch, Severity::Warning, predicate, format!(
                        "Predicate <{predicate}> points to {}, but {} is typed {}.",
                        alternatives.iter().map(|c| format!("<{c}>")).collect::<Vec<_>>().join(", "),
                        term_to_string(object),
                        given.join(", ")
                    ), alternatives);
                }
            }
        }
    }
}

/// Checks every pattern group against the schema of the endpoint it runs
/// on. Groups bound for endpoints without a (non-empty) schema only produce
/// an `unknown_endpoint` warning. Property paths and negated patterns are
/// skipped and listed in `notes`.
pub fn validate(
    query: &ParsedQuery,
    schemas: &BTreeMap<String, ClassPropertyMatrix>,
    home_endpoint: &str,
) -> ValidationReport {
    let mut issues = Vec::new();
    let mut notes = Vec::new();
    for group in &query.pattern_groups {
        let endpoint = match &group.target {
            GroupTarget::Home => home_endpoint,
            GroupTarget::Service(iri) => iri.as_str(),
            GroupTarget::ServiceVariable(v) => {
                notes.push(format!("SERVICE ?{v} is resolved at run time and was not checked."));
                continue;
            }
        };
        let Some(schema) = schemas.get(endpoint).filter(|s| !s.is_empty()) else {
            if !group.triples.is_empty() {
                let t = &group.triples[0];
                issues.push(ValidationIssue {
                    severity: Severity::Warning,
                    kind: IssueKind::UnknownEndpoint,
                    iri: endpoint.to_string(),
                    message: format!("No schema is known for endpoint {endpoint}; its patterns were not checked."),
                    alternatives: Vec::new(),
                    location: IssueLocation {
                        subject: term_to_string(&t.subject),
                        predicate: term_to_string(&t.predicate),
                        object: term_to_string(&t.object),
                        endpoint: endpoint.to_string(),
                    },
                });
            }
            continue;
        };
        let mut classes: HashMap<String, BTreeSet<&str>> = HashMap::new();
        for t in group.triples.iter().filter(|t| !t.negated) {
            if let (Some(key), Some(RDF_TYPE), Term::Iri(class)) = (term_key(&t.subject), t.predicate.as_iri(), &t.object) {
                if schema.has_class(class) {
                    classes.entry(key).or_default().insert(class.as_str());
                }
            }
        }
        let mut check = GroupCheck { schema, endpoint, severity: Severity::Error, classes, issues: Vec::new() };
        for t in &group.triples {
            if t.negated {
                notes.push(format!("Skipped negated pattern {}.", crate::sparql::triple_to_string(t)));
                continue;
            }
            if let Term::Path(_) = t.predicate {
                notes.push(format!("Skipped property path in {}.", crate::sparql::triple_to_string(t)));
                continue;
            }
            check.check(t);
        }
        issues.extend(check.issues);
    }
    ValidationReport::finish(issues, notes)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("the validation report has no errors to repair")]
pub struct NothingToRepair;

/// Default character budget for [`render_repair_prompt`].
pub const DEFAULT_REPAIR_BUDGET: usize = 6000;

fn issue_line(issue: &ValidationIssue, alternatives: usize) -> String {
    let mut line = format!("- {}", issue.message);
    let shown: Vec<String> = issue.alternatives.iter().take(alternatives).map(|a| format!("<{a}>")).collect();
    if !shown.is_empty() {
        let _ = write!(line, " Possible alternatives: {}.", shown.join(", "));
    }
    line
}

fn assemble(original_query: &str, errors: &[String], warnings: &[String]) -> String {
    let mut out = String::from(
        "The SPARQL query below does not comply with the schema of the endpoints it targets.\n\n```sparql\n",
    );
    out.push_str(original_query.trim());
    out.push_str("\n```\n\nFix these errors:\n");
    for e in errors {
        out.push_str(e);
        out.push('\n');
    }
    if !warnings.is_empty() {
        out.push_str("\nAlso consider these warnings:\n");
        for w in warnings {
            out.push_str(w);
            out.push('\n');
        }
    }
    out.push_str("\nReturn the corrected query in a single ```sparql code block.\n");
    out
}

/// Feedback prompt for the next generation attempt. When the text exceeds
/// `budget` characters, warnings are dropped (last first), then the
/// alternatives lists are shortened one entry at a time from the longest.
/// Error messages and the query itself are always kept, so the result can
/// still exceed `budget` when those alone do.
pub fn render_repair_prompt(
    report: &ValidationReport,
    original_query: &str,
    budget: usize,
) -> Result<String, NothingToRepair> {
    let errors: Vec<&ValidationIssue> = report.errors().collect();
    if errors.is_empty() {
        return Err(NothingToRepair);
    }
    let mut limits: Vec<usize> = errors.iter().map(|e| e.alternatives.len()).collect();
    let mut warnings: Vec<String> = report.warnings().map(|w| issue_line(w, w.alternatives.len())).collect();
    let render = |limits: &[usize], warnings: &[String]| {
        let lines: Vec<String> = errors.iter().zip(limits).map(|(e, n)| issue_line(e, *n)).collect();
        assemble(original_query, &lines, warnings)
    };
    let mut text = render(&limits, &warnings);
    while text.chars().count() > budget {
        if warnings.pop().is_none() {
            let Some((i, _)) = limits.iter().enumerate().filter(|(_, n)| **n > 0).max_by_key(|(i, n)| (**n, *i)) else {
                break;
            };
            limits[i] -= 1;
        }
        text = render(&limits, &warnings);
    }
    Ok(text)
}
