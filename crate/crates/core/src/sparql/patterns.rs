use serde::{Deserialize, Serialize};

use super::ast::*;
use super::ParsedQuery;

/// Where a pattern group is evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GroupTarget {
    /// The endpoint the query is sent to.
    Home,
    Service(String),
    /// `SERVICE ?var { ... }`; the endpoint is only known at run time.
    ServiceVariable(String),
}

/// Triple patterns that run against one endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternGroup {
    pub target: GroupTarget,
    pub triples: Vec<TriplePattern>,
}

impl PatternGroup {
    pub fn service_endpoint(&self) -> Option<&str> {
        match &self.target {
            GroupTarget::Service(iri) => Some(iri),
            _ => None,
        }
    }
}

/// One group for the home endpoint (always first, possibly empty) followed by
/// one group per `SERVICE` block in source order. Triples of a nested
/// `SERVICE` belong to the innermost block only; sub-queries and `EXISTS`
/// patterns belong to the enclosing group. CONSTRUCT templates are not counted.
pub fn extract_pattern_groups(query: &ParsedQuery) -> Vec<PatternGroup> {
    query.pattern_groups.clone()
}

/// Number of triple patterns across every group.
pub fn count_triple_patterns(query: &ParsedQuery) -> usize {
    query.pattern_groups.iter().map(|g| g.triples.len()).sum()
}

pub(crate) fn collect_groups(
    form: &QueryForm,
    where_clause: &GroupPattern,
    modifiers: &SolutionModifiers,
) -> Vec<PatternGroup> {
    let mut c = Collector {
        groups: vec![PatternGroup { target: GroupTarget::Home, triples: Vec::new() }],
    };
    if let QueryForm::Select(select) = form {
        c.select(select, 0);
    }
    c.group(where_clause, 0);
    c.modifiers(modifiers, 0);
    c.groups
}

struct Collector {
    groups: Vec<PatternGroup>,
}

impl Collector {
    fn group(&mut self, group: &GroupPattern, current: usize) {
        for element in &group.0 {
            match element {
                PatternElement::Triples(ts) => self.groups[current].triples.extend(ts.iter().cloned()),
                PatternElement::Group(g) | PatternElement::Optional(g) | PatternElement::Minus(g) => {
                    self.group(g, current)
                }
                PatternElement::Union(gs) => gs.iter().for_each(|g| self.group(g, current)),
                PatternElement::Graph { pattern, .. } => self.group(pattern, current),
                PatternElement::Service { endpoint, pattern, .. } => {
                    let target = match endpoint {
                        Term::Variable(v) => GroupTarget::ServiceVariable(v.clone()),
                        Term::Iri(i) => GroupTarget::Service(i.clone()),
                        other => GroupTarget::ServiceVariable(format!("{other:?}")),
                    };
                    self.groups.push(PatternGroup { target, triples: Vec::new() });
                    let idx = self.groups.len() - 1;
                    self.group(pattern, idx);
                }
                PatternElement::Filter(e) => self.expression(e, current),
                PatternElement::Bind { expression, .. } => self.expression(expression, current),
                PatternElement::Values(_) => {}
                PatternElement::SubSelect(sub) => {
                    self.select(&sub.select, current);
                    self.group(&sub.where_clause, current);
                    self.modifiers(&sub.modifiers, current);
                }
            }
        }
    }

    fn select(&mut self, select: &SelectClause, current: usize) {
        if let Projection::Items(items) = &select.projection {
            for item in items {
                if let ProjectionItem::Expression { expression, .. } = item {
                    self.expression(expression, current);
                }
            }
        }
    }

    fn modifiers(&mut self, m: &SolutionModifiers, current: usize) {
        for c in &m.group_by {
            self.expression(&c.expression, current);
        }
        for e in &m.having {
            self.expression(e, current);
        }
        for o in &m.order_by {
            self.expression(&o.expression, current);
        }
    }

    fn expression(&mut self, e: &Expression, current: usize) {
        match e {
            Expression::Variable(_) | Expression::Iri(_) | Expression::Literal(_) => {}
            Expression::Binary { left, right, .. } => {
                self.expression(left, current);
                self.expression(right, current);
            }
            Expression::Unary { operand, .. } => self.expression(operand, current),
            Expression::In { operand, list, .. } => {
                self.expression(operand, current);
                list.iter().for_each(|x| self.expression(x, current));
            }
            Expression::Call { args, .. } => args.iter().for_each(|x| self.expression(x, current)),
            Expression::Exists { pattern, .. } => self.group(pattern, current),
        }
    }
}
