//! Recursive-descent parser over the SPARQL 1.1 query grammar.

use std::collections::BTreeMap;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::patterns::collect_groups;
use super::{default_prefix, ParsedQuery, SyntaxError};

const UPDATE_KEYWORDS: &[&str] = &[
    "INSERT", "DELETE", "LOAD", "CLEAR", "CREATE", "DROP", "COPY", "MOVE", "ADD", "WITH",
];

const NOT_TRIPLES_KEYWORDS: &[&str] =
    &["OPTIONAL", "MINUS", "GRAPH", "SERVICE", "FILTER", "BIND", "VALUES"];

type PResult<T> = Result<T, SyntaxError>;

pub(crate) fn parse(text: &str) -> PResult<ParsedQuery> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        text,
        tokens,
        pos: 0,
        base: None,
        prefixes: BTreeMap::new(),
        negated_depth: 0,
        fresh_blank: 0,
    };
    parser.query()
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    base: Option<String>,
    prefixes: BTreeMap<String, String>,
    negated_depth: usize,
    fresh_blank: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn next(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError::at(self.text, self.offset(), message)
    }

    fn expected(&self, what: &str) -> SyntaxError {
        self.error_here(format!("expected {what}, found {}", self.peek().describe()))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek().is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str, context: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.expected(&format!("'{p}' {context}")))
        }
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        if self.peek().is_word(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, kw: &str) -> PResult<()> {
        if self.eat_word(kw) {
            Ok(())
        } else {
            Err(self.expected(&format!("'{kw}'")))
        }
    }

    fn fresh_blank(&mut self) -> Term {
        let label = format!("genid{}", self.fresh_blank);
        self.fresh_blank += 1;
        Term::BlankNode(label)
    }

    // ---- prologue and query forms ----

    fn query(&mut self) -> PResult<ParsedQuery> {
        self.prologue()?;
        let word = match self.peek() {
            Tok::Word(w) => w.to_ascii_uppercase(),
            _ => return Err(self.expected("SELECT, ASK, CONSTRUCT or DESCRIBE")),
        };
        if UPDATE_KEYWORDS.contains(&word.as_str()) {
            return Err(self.error_here(format!(
                "SPARQL Update is not supported (found '{word}'); \
                 only SELECT, ASK, CONSTRUCT and DESCRIBE queries are accepted"
            )));
        }
        let (query_type, form, dataset, where_clause) = match word.as_str() {
            "SELECT" => {
                let select = self.select_clause()?;
                let dataset = self.dataset_clauses()?;
                let where_clause = self.where_clause()?;
                (QueryType::Select, QueryForm::Select(select), dataset, where_clause)
            }
            "ASK" => {
                self.next();
                let dataset = self.dataset_clauses()?;
                let where_clause = self.where_clause()?;
                (QueryType::Ask, QueryForm::Ask, dataset, where_clause)
            }
            "CONSTRUCT" => {
                self.next();
                if self.peek().is_punct("{") {
                    let template = self.construct_template()?;
                    let dataset = self.dataset_clauses()?;
                    let where_clause = self.where_clause()?;
                    (QueryType::Construct, QueryForm::Construct { template }, dataset, where_clause)
                } else {
                    let dataset = self.dataset_clauses()?;
                    self.expect_word("WHERE")?;
                    let template = self.construct_template()?;
                    let where_clause = if template.is_empty() {
                        GroupPattern::default()
                    } else {
                        GroupPattern(vec![PatternElement::Triples(template.clone())])
                    };
                    (QueryType::Construct, QueryForm::Construct { template }, dataset, where_clause)
                }
            }
            "DESCRIBE" => {
                self.next();
                let mut targets = Vec::new();
                if !self.eat_punct("*") {
                    while let Tok::Var(_) | Tok::Iri(_) | Tok::PName { .. } = self.peek() {
                        targets.push(self.var_or_iri()?);
                    }
                    if targets.is_empty() {
                        return Err(self.expected("'*', a variable or an IRI after DESCRIBE"));
                    }
                }
                let dataset = self.dataset_clauses()?;
                let where_clause = if self.peek().is_word("WHERE") || self.peek().is_punct("{") {
                    self.where_clause()?
                } else {
                    GroupPattern::default()
                };
                (QueryType::Describe, QueryForm::Describe { targets }, dataset, where_clause)
            }
            _ => return Err(self.expected("SELECT, ASK, CONSTRUCT or DESCRIBE")),
        };
        let modifiers = self.solution_modifiers()?;
        let values = if self.eat_word("VALUES") { Some(self.data_block()?) } else { None };
        if !matches!(self.peek(), Tok::Eof) {
            return Err(self.error_here(format!(
                "unexpected {} after the end of the query",
                self.peek().describe()
            )));
        }

        let projected_variables = match &form {
            QueryForm::Select(sel) => projected(&sel.projection, &where_clause),
            _ => Vec::new(),
        };
        let pattern_groups = collect_groups(&form, &where_clause, &modifiers);
        Ok(ParsedQuery {
            query_type,
            base: self.base.clone(),
            prefixes: std::mem::take(&mut self.prefixes),
            form,
            dataset,
            where_clause,
            modifiers,
            values,
            projected_variables,
            pattern_groups,
        })
    }

    fn prologue(&mut self) -> PResult<()> {
        loop {
            if self.eat_word("BASE") {
                match self.next() {
                    Tok::Iri(iri) => {
                        let resolved = self.resolve_iri(&iri);
                        self.base = Some(resolved);
                    }
                    _ => {
                        self.pos -= 1;
                        return Err(self.expected("an IRI after BASE"));
                    }
                }
            } else if self.eat_word("PREFIX") {
                let label = match self.peek().clone() {
                    Tok::PName { prefix, local } if local.is_empty() => {
                        self.next();
                        prefix
                    }
                    _ => return Err(self.expected("a prefix label such as 'ex:' after PREFIX")),
                };
                match self.peek().clone() {
                    Tok::Iri(iri) => {
                        self.next();
                        let resolved = self.resolve_iri(&iri);
                        self.prefixes.insert(label, resolved);
                    }
                    _ => return Err(self.expected(&format!("an IRI for prefix '{label}:'"))),
                }
            } else {
                return Ok(());
            }
        }
    }

    fn resolve_iri(&self, raw: &str) -> String {
        match &self.base {
            Some(base) if !has_scheme(raw) => resolve_relative(base, raw),
            _ => raw.to_string(),
        }
    }

    fn resolve_pname(&self, prefix: &str, local: &str) -> PResult<String> {
        let ns = self
            .prefixes
            .get(prefix)
            .map(String::as_str)
            .or_else(|| default_prefix(prefix))
            .ok_or_else(|| {
                self.error_here(format!(
                    "undeclared prefix '{prefix}:' (add a PREFIX declaration for it)"
                ))
            })?;
        Ok(format!("{ns}{local}"))
    }

    fn iri(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Iri(i) => {
                self.next();
                Ok(self.resolve_iri(&i))
            }
            Tok::PName { prefix, local } => {
                let iri = self.resolve_pname(&prefix, &local)?;
                self.next();
                Ok(iri)
            }
            _ => Err(self.expected("an IRI")),
        }
    }

    fn var_or_iri(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.next();
                Ok(Term::Variable(v))
            }
            _ => Ok(Term::Iri(self.iri()?)),
        }
    }

    fn select_clause(&mut self) -> PResult<SelectClause> {
        self.expect_word("SELECT")?;
        let modifier = if self.eat_word("DISTINCT") {
            Some(SelectModifier::Distinct)
        } else if self.eat_word("REDUCED") {
            Some(SelectModifier::Reduced)
        } else {
            None
        };
        if self.eat_punct("*") {
            return Ok(SelectClause { modifier, projection: Projection::All });
        }
        let mut items = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Var(v) => {
                    self.next();
                    items.push(ProjectionItem::Variable(v));
                }
                Tok::Punct("(") => {
                    self.next();
                    let expression = self.expression()?;
                    self.expect_word("AS")?;
                    let alias = self.variable()?;
                    self.expect_punct(")", "to close the projected expression")?;
                    items.push(ProjectionItem::Expression { expression, alias });
                }
                _ => break,
            }
        }
        if items.is_empty() {
            return Err(self.expected("'*', a variable or '(expression AS ?var)' after SELECT"));
        }
        Ok(SelectClause { modifier, projection: Projection::Items(items) })
    }

    fn variable(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.next();
                Ok(v)
            }
            _ => Err(self.expected("a variable")),
        }
    }

    fn dataset_clauses(&mut self) -> PResult<Vec<DatasetClause>> {
        let mut out = Vec::new();
        while self.eat_word("FROM") {
            let named = self.eat_word("NAMED");
            out.push(DatasetClause { named, iri: self.iri()? });
        }
        Ok(out)
    }

    fn where_clause(&mut self) -> PResult<GroupPattern> {
        self.eat_word("WHERE");
        if !self.peek().is_punct("{") {
            return Err(self.expected("'{' to open the WHERE clause"));
        }
        self.group_graph_pattern()
    }

    fn construct_template(&mut self) -> PResult<Vec<TriplePattern>> {
        self.expect_punct("{", "to open the CONSTRUCT template")?;
        let mut out = Vec::new();
        while !self.peek().is_punct("}") {
            self.triples_same_subject(&mut out)?;
            if !self.eat_punct(".") {
                break;
            }
        }
        self.expect_punct("}", "to close the CONSTRUCT template")?;
        Ok(out)
    }

    fn solution_modifiers(&mut self) -> PResult<SolutionModifiers> {
        let mut m = SolutionModifiers::default();
        if self.eat_word("GROUP") {
            self.expect_word("BY")?;
            while let Some(c) = self.group_condition()? {
                m.group_by.push(c);
            }
            if m.group_by.is_empty() {
                return Err(self.expected("a grouping condition after GROUP BY"));
            }
        }
        if self.eat_word("HAVING") {
            while self.starts_constraint() {
                m.having.push(self.constraint()?);
            }
            if m.having.is_empty() {
                return Err(self.expected("a constraint after HAVING"));
            }
        }
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            loop {
                if self.eat_word("ASC") {
                    m.order_by.push(OrderCondition {
                        descending: false,
                        expression: self.bracketted_expression()?,
                    });
                } else if self.eat_word("DESC") {
                    m.order_by.push(OrderCondition {
                        descending: true,
                        expression: self.bracketted_expression()?,
                    });
                } else if let Tok::Var(v) = self.peek().clone() {
                    self.next();
                    m.order_by
                        .push(OrderCondition { descending: false, expression: Expression::Variable(v) });
                } else if self.starts_constraint() {
                    m.order_by
                        .push(OrderCondition { descending: false, expression: self.constraint()? });
                } else {
                    break;
                }
            }
            if m.order_by.is_empty() {
                return Err(self.expected("an ordering condition after ORDER BY"));
            }
        }
        for _ in 0..2 {
            if m.limit.is_none() && self.eat_word("LIMIT") {
                m.limit = Some(self.unsigned("LIMIT")?);
            } else if m.offset.is_none() && self.eat_word("OFFSET") {
                m.offset = Some(self.unsigned("OFFSET")?);
            }
        }
        Ok(m)
    }

    fn unsigned(&mut self, after: &str) -> PResult<u64> {
        match self.peek().clone() {
            Tok::Integer(n) => {
                let v = n
                    .parse()
                    .map_err(|_| self.error_here(format!("{after} value '{n}' is out of range")))?;
                self.next();
                Ok(v)
            }
            _ => Err(self.expected(&format!("a non-negative integer after {after}"))),
        }
    }

    fn group_condition(&mut self) -> PResult<Option<GroupCondition>> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.next();
                Ok(Some(GroupCondition { expression: Expression::Variable(v), alias: None }))
            }
            Tok::Punct("(") => {
                self.next();
                let expression = self.expression()?;
                let alias = if self.eat_word("AS") { Some(self.variable()?) } else { None };
                self.expect_punct(")", "to close the grouping condition")?;
                Ok(Some(GroupCondition { expression, alias }))
            }
            _ if self.starts_constraint() => {
                Ok(Some(GroupCondition { expression: self.constraint()?, alias: None }))
            }
            _ => Ok(None),
        }
    }

    fn starts_constraint(&self) -> bool {
        match self.peek() {
            Tok::Punct("(") => true,
            Tok::Word(w) => {
                self.peek_at(1).is_punct("(")
                    || w.eq_ignore_ascii_case("NOT")
                    || w.eq_ignore_ascii_case("EXISTS")
            }
            Tok::Iri(_) | Tok::PName { .. } => self.peek_at(1).is_punct("("),
            _ => false,
        }
    }

    fn constraint(&mut self) -> PResult<Expression> {
        if self.peek().is_punct("(") {
            self.bracketted_expression()
        } else if self.starts_constraint() {
            self.primary()
        } else {
            Err(self.expected("a bracketed expression or function call"))
        }
    }

    fn bracketted_expression(&mut self) -> PResult<Expression> {
        self.expect_punct("(", "to open the expression")?;
        let e = self.expression()?;
        self.expect_punct(")", "to close the expression")?;
        Ok(e)
    }

    // ---- group graph patterns ----

    fn group_graph_pattern(&mut self) -> PResult<GroupPattern> {
        self.expect_punct("{", "to open a group pattern")?;
        if self.peek().is_word("SELECT") {
            let sub = self.sub_select()?;
            self.expect_punct("}", "to close the sub-query")?;
            return Ok(GroupPattern(vec![PatternElement::SubSelect(Box::new(sub))]));
        }
        let mut elements: Vec<PatternElement> = Vec::new();
        let mut dot_allowed = false;
        loop {
            let tok = self.peek().clone();
            match tok {
                Tok::Punct("}") => {
                    self.next();
                    return Ok(GroupPattern(elements));
                }
                Tok::Eof => return Err(self.expected("'}' to close the group pattern")),
                Tok::Punct(".") if dot_allowed => {
                    self.next();
                    dot_allowed = false;
                }
                Tok::Punct("{") => {
                    let first = self.group_graph_pattern()?;
                    if self.peek().is_word("UNION") {
                        let mut alternatives = vec![first];
                        while self.eat_word("UNION") {
                            if !self.peek().is_punct("{") {
                                return Err(self.expected("'{' after UNION"));
                            }
                            alternatives.push(self.group_graph_pattern()?);
                        }
                        elements.push(PatternElement::Union(alternatives));
                    } else {
                        elements.push(PatternElement::Group(first));
                    }
                    dot_allowed = true;
                }
                Tok::Word(ref w) if is_not_triples_keyword(w) => {
                    let element = self.not_triples(&w.to_ascii_uppercase())?;
                    elements.push(element);
                    dot_allowed = true;
                }
                _ if self.starts_term() => {
                    let mut triples = Vec::new();
                    self.triples_block(&mut triples)?;
                    if let Some(PatternElement::Triples(prev)) = elements.last_mut() {
                        prev.extend(triples);
                    } else {
                        elements.push(PatternElement::Triples(triples));
                    }
                    dot_allowed = false;
                }
                _ => {
                    return Err(self.expected("a triple pattern, a graph pattern keyword or '}'"));
                }
            }
        }
    }

    fn not_triples(&mut self, kw: &str) -> PResult<PatternElement> {
        self.next();
        Ok(match kw {
            "OPTIONAL" => PatternElement::Optional(self.group_graph_pattern()?),
            "MINUS" => {
                self.negated_depth += 1;
                let g = self.group_graph_pattern();
                self.negated_depth -= 1;
                PatternElement::Minus(g?)
            }
            "GRAPH" => {
                let name = self.var_or_iri()?;
                PatternElement::Graph { name, pattern: self.group_graph_pattern()? }
            }
            "SERVICE" => {
                let silent = self.eat_word("SILENT");
                let endpoint = self.var_or_iri()?;
                PatternElement::Service { silent, endpoint, pattern: self.group_graph_pattern()? }
            }
            "FILTER" => PatternElement::Filter(self.constraint()?),
            "BIND" => {
                self.expect_punct("(", "after BIND")?;
                let expression = self.expression()?;
                self.expect_word("AS")?;
                let variable = self.variable()?;
                self.expect_punct(")", "to close BIND")?;
                PatternElement::Bind { expression, variable }
            }
            "VALUES" => PatternElement::Values(self.data_block()?),
            _ => unreachable!("checked by is_not_triples_keyword"),
        })
    }

    fn sub_select(&mut self) -> PResult<SubQuery> {
        let select = self.select_clause()?;
        let where_clause = self.where_clause()?;
        let modifiers = self.solution_modifiers()?;
        let values = if self.eat_word("VALUES") { Some(self.data_block()?) } else { None };
        Ok(SubQuery { select, where_clause, modifiers, values })
    }

    fn data_block(&mut self) -> PResult<InlineData> {
        if let Tok::Var(v) = self.peek().clone() {
            self.next();
            self.expect_punct("{", "to open the VALUES block")?;
            let mut rows = Vec::new();
            while !self.eat_punct("}") {
                rows.push(vec![self.data_value()?]);
            }
            return Ok(InlineData { variables: vec![v], rows });
        }
        self.expect_punct("(", "or a variable after VALUES")?;
        let mut variables = Vec::new();
        while let Tok::Var(v) = self.peek().clone() {
            self.next();
            variables.push(v);
        }
        self.expect_punct(")", "to close the VALUES variable list")?;
        self.expect_punct("{", "to open the VALUES block")?;
        let mut rows = Vec::new();
        while !self.eat_punct("}") {
            self.expect_punct("(", "to open a VALUES row")?;
            let mut row = Vec::new();
            while !self.eat_punct(")") {
                row.push(self.data_value()?);
            }
            if row.len() != variables.len() {
                return Err(self.error_here(format!(
                    "VALUES row has {} values but {} variables were declared",
                    row.len(),
                    variables.len()
                )));
            }
            rows.push(row);
        }
        Ok(InlineData { variables, rows })
    }

    fn data_value(&mut self) -> PResult<Option<Term>> {
        if self.eat_word("UNDEF") {
            return Ok(None);
        }
        match self.peek() {
            Tok::Var(_) | Tok::Blank(_) | Tok::Punct("[") | Tok::Punct("(") => {
                Err(self.expected("an IRI, a literal or UNDEF in VALUES"))
            }
            _ => self.var_or_term().map(Some),
        }
    }

    // ---- triples ----

    fn starts_term(&self) -> bool {
        match self.peek() {
            Tok::Var(_)
            | Tok::Iri(_)
            | Tok::PName { .. }
            | Tok::Blank(_)
            | Tok::Str(_)
            | Tok::Integer(_)
            | Tok::Decimal(_)
            | Tok::Double(_)
            | Tok::Punct("[")
            | Tok::Punct("(") => true,
            Tok::Punct("+") | Tok::Punct("-") => matches!(
                self.peek_at(1),
                Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_)
            ),
            Tok::Word(w) => w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false"),
            _ => false,
        }
    }

    fn starts_verb(&self) -> bool {
        match self.peek() {
            Tok::Var(_) | Tok::Iri(_) | Tok::PName { .. } => true,
            Tok::Punct("^") | Tok::Punct("!") | Tok::Punct("(") => true,
            Tok::Word(w) => w == "a",
            _ => false,
        }
    }

    fn triples_block(&mut self, out: &mut Vec<TriplePattern>) -> PResult<()> {
        loop {
            self.triples_same_subject(out)?;
            if self.eat_punct(".") {
                if self.starts_term() {
                    continue;
                }
                return Ok(());
            }
            let ok = match self.peek() {
                Tok::Punct("}") | Tok::Punct("{") => true,
                Tok::Word(w) => is_not_triples_keyword(w),
                _ => false,
            };
            if ok {
                return Ok(());
            }
            return Err(self.expected("'.' or '}' after the triple pattern"));
        }
    }

    fn triples_same_subject(&mut self, out: &mut Vec<TriplePattern>) -> PResult<()> {
        let non_empty_bracket =
            self.peek().is_punct("[") && !self.peek_at(1).is_punct("]");
        let non_nil_paren = self.peek().is_punct("(") && !self.peek_at(1).is_punct(")");
        if non_empty_bracket {
            let subject = self.blank_node_property_list(out)?;
            if self.starts_verb() {
                self.property_list(&subject, out)?;
            }
            Ok(())
        } else if non_nil_paren {
            let subject = self.collection(out)?;
            self.property_list(&subject, out)
        } else {
            let subject = self.var_or_term()?;
            self.property_list(&subject, out)
        }
    }

    fn property_list(&mut self, subject: &Term, out: &mut Vec<TriplePattern>) -> PResult<()> {
        if !self.starts_verb() {
            return Err(self.expected("a predicate (IRI, variable, 'a' or property path)"));
        }
        loop {
            let predicate = self.verb()?;
            loop {
                let object = self.graph_node(out)?;
                out.push(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                    negated: self.negated_depth > 0,
                });
                if !self.eat_punct(",") {
                    break;
                }
            }
            if !self.eat_punct(";") {
                return Ok(());
            }
            while self.eat_punct(";") {}
            if !self.starts_verb() {
                return Ok(());
            }
        }
    }

    fn verb(&mut self) -> PResult<Term> {
        if let Tok::Var(v) = self.peek().clone() {
            self.next();
            return Ok(Term::Variable(v));
        }
        match self.peek() {
            Tok::Str(_) | Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_) | Tok::Blank(_) => {
                return Err(self.error_here(format!(
                    "a predicate must be an IRI, a variable or a property path, found {}",
                    self.peek().describe()
                )));
            }
            _ => {}
        }
        match self.path()? {
            PropertyPath::Iri(i) => Ok(Term::Iri(i)),
            path => Ok(Term::Path(path)),
        }
    }

    fn graph_node(&mut self, out: &mut Vec<TriplePattern>) -> PResult<Term> {
        if self.peek().is_punct("[") && !self.peek_at(1).is_punct("]") {
            self.blank_node_property_list(out)
        } else if self.peek().is_punct("(") && !self.peek_at(1).is_punct(")") {
            self.collection(out)
        } else {
            self.var_or_term()
        }
    }

    fn blank_node_property_list(&mut self, out: &mut Vec<TriplePattern>) -> PResult<Term> {
        self.expect_punct("[", "")?;
        let node = self.fresh_blank();
        self.property_list(&node, out)?;
        self.expect_punct("]", "to close the blank node property list")?;
        Ok(node)
    }

    fn collection(&mut self, out: &mut Vec<TriplePattern>) -> PResult<Term> {
        self.expect_punct("(", "")?;
        let mut items = Vec::new();
        while !self.eat_punct(")") {
            if matches!(self.peek(), Tok::Eof) {
                return Err(self.expected("')' to close the collection"));
            }
            items.push(self.graph_node(out)?);
        }
        let nodes: Vec<Term> = items.iter().map(|_| self.fresh_blank()).collect();
        let negated = self.negated_depth > 0;
        for (i, item) in items.into_iter().enumerate() {
            out.push(TriplePattern {
                subject: nodes[i].clone(),
                predicate: Term::Iri(RDF_FIRST.into()),
                object: item,
                negated,
            });
            let rest = nodes.get(i + 1).cloned().unwrap_or_else(|| Term::Iri(RDF_NIL.into()));
            out.push(TriplePattern {
                subject: nodes[i].clone(),
                predicate: Term::Iri(RDF_REST.into()),
                object: rest,
                negated,
            });
        }
        Ok(nodes.into_iter().next().unwrap_or_else(|| Term::Iri(RDF_NIL.into())))
    }

    fn var_or_term(&mut self) -> PResult<Term> {
        let tok = self.peek().clone();
        match tok {
            Tok::Var(v) => {
                self.next();
                Ok(Term::Variable(v))
            }
            Tok::Iri(_) | Tok::PName { .. } => Ok(Term::Iri(self.iri()?)),
            Tok::Blank(b) => {
                self.next();
                Ok(Term::BlankNode(b))
            }
            Tok::Punct("[") if self.peek_at(1).is_punct("]") => {
                self.next();
                self.next();
                Ok(self.fresh_blank())
            }
            Tok::Punct("(") if self.peek_at(1).is_punct(")") => {
                self.next();
                self.next();
                Ok(Term::Iri(RDF_NIL.into()))
            }
            Tok::Str(_)
            | Tok::Integer(_)
            | Tok::Decimal(_)
            | Tok::Double(_)
            | Tok::Punct("+")
            | Tok::Punct("-") => Ok(Term::Literal(self.literal()?)),
            Tok::Word(ref w) if w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false") => {
                Ok(Term::Literal(self.literal()?))
            }
            _ => Err(self.expected("a variable, IRI, literal or blank node")),
        }
    }

    fn literal(&mut self) -> PResult<Literal> {
        let sign = if self.eat_punct("-") {
            "-"
        } else if self.eat_punct("+") {
            "+"
        } else {
            ""
        };
        let tok = self.peek().clone();
        let numeric = |value: &str, dt: &str| Literal {
            value: format!("{sign}{value}"),
            datatype: Some(dt.to_string()),
            language: None,
        };
        let lit = match tok {
            Tok::Integer(n) => numeric(&n, XSD_INTEGER),
            Tok::Decimal(n) => numeric(&n, XSD_DECIMAL),
            Tok::Double(n) => numeric(&n, XSD_DOUBLE),
            Tok::Word(w) if sign.is_empty() && w.eq_ignore_ascii_case("true") => Literal {
                value: "true".into(),
                datatype: Some(XSD_BOOLEAN.into()),
                language: None,
            },
            Tok::Word(w) if sign.is_empty() && w.eq_ignore_ascii_case("false") => Literal {
                value: "false".into(),
                datatype: Some(XSD_BOOLEAN.into()),
                language: None,
            },
            Tok::Str(s) if sign.is_empty() => {
                self.next();
                return match self.peek().clone() {
                    Tok::LangTag(l) => {
                        self.next();
                        Ok(Literal { value: s, datatype: None, language: Some(l) })
                    }
                    Tok::DoubleCaret => {
                        self.next();
                        let dt = self.iri()?;
                        Ok(Literal { value: s, datatype: Some(dt), language: None })
                    }
                    _ => Ok(Literal { value: s, datatype: None, language: None }),
                };
            }
            _ => return Err(self.expected("a literal")),
        };
        self.next();
        Ok(lit)
    }

    // ---- property paths ----

    fn path(&mut self) -> PResult<PropertyPath> {
        let mut alternatives = vec![self.path_sequence()?];
        while self.eat_punct("|") {
            alternatives.push(self.path_sequence()?);
        }
        Ok(if alternatives.len() == 1 {
            alternatives.pop().unwrap()
        } else {
            PropertyPath::Alternative(alternatives)
        })
    }

    fn path_sequence(&mut self) -> PResult<PropertyPath> {
        let mut steps = vec![self.path_elt_or_inverse()?];
        while self.eat_punct("/") {
            steps.push(self.path_elt_or_inverse()?);
        }
        Ok(if steps.len() == 1 { steps.pop().unwrap() } else { PropertyPath::Sequence(steps) })
    }

    fn path_elt_or_inverse(&mut self) -> PResult<PropertyPath> {
        if self.eat_punct("^") {
            Ok(PropertyPath::Inverse(Box::new(self.path_elt()?)))
        } else {
            self.path_elt()
        }
    }

    fn path_elt(&mut self) -> PResult<PropertyPath> {
        let primary = self.path_primary()?;
        Ok(match self.peek() {
            Tok::Punct("?") => {
                self.next();
                PropertyPath::ZeroOrOne(Box::new(primary))
            }
            Tok::Punct("*") => {
                self.next();
                PropertyPath::ZeroOrMore(Box::new(primary))
            }
            Tok::Punct("+") => {
                self.next();
                PropertyPath::OneOrMore(Box::new(primary))
            }
            _ => primary,
        })
    }

    fn path_primary(&mut self) -> PResult<PropertyPath> {
        match self.peek().clone() {
            Tok::Iri(_) | Tok::PName { .. } => Ok(PropertyPath::Iri(self.iri()?)),
            Tok::Word(w) if w == "a" => {
                self.next();
                Ok(PropertyPath::Iri(RDF_TYPE.into()))
            }
            Tok::Punct("!") => {
                self.next();
                let mut set = Vec::new();
                if self.eat_punct("(") {
                    loop {
                        set.push(self.path_one_in_set()?);
                        if !self.eat_punct("|") {
                            break;
                        }
                    }
                    self.expect_punct(")", "to close the negated property set")?;
                } else {
                    set.push(self.path_one_in_set()?);
                }
                Ok(PropertyPath::Negated(set))
            }
            Tok::Punct("(") => {
                self.next();
                let p = self.path()?;
                self.expect_punct(")", "to close the property path")?;
                Ok(p)
            }
            _ => Err(self.expected("a predicate (IRI, variable, 'a' or property path)")),
        }
    }

    fn path_one_in_set(&mut self) -> PResult<(String, bool)> {
        let inverse = self.eat_punct("^");
        if self.peek().is_word("a") {
            self.next();
            return Ok((RDF_TYPE.into(), inverse));
        }
        Ok((self.iri()?, inverse))
    }

    // ---- expressions ----

    fn expression(&mut self) -> PResult<Expression> {
        let mut left = self.and_expression()?;
        while self.eat_punct("||") {
            let right = self.and_expression()?;
            left = binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expression(&mut self) -> PResult<Expression> {
        let mut left = self.relational()?;
        while self.eat_punct("&&") {
            let right = self.relational()?;
            left = binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn relational(&mut self) -> PResult<Expression> {
        let left = self.additive()?;
        let op = match self.peek() {
            Tok::Punct("=") => Some(BinaryOp::Equal),
            Tok::Punct("!=") => Some(BinaryOp::NotEqual),
            Tok::Punct("<") => Some(BinaryOp::Less),
            Tok::Punct(">") => Some(BinaryOp::Greater),
            Tok::Punct("<=") => Some(BinaryOp::LessOrEqual),
            Tok::Punct(">=") => Some(BinaryOp::GreaterOrEqual),
            _ => None,
        };
        if let Some(op) = op {
            self.next();
            let right = self.additive()?;
            return Ok(binary(op, left, right));
        }
        let negated = if self.peek().is_word("NOT") && self.peek_at(1).is_word("IN") {
            self.next();
            true
        } else {
            false
        };
        if self.eat_word("IN") {
            let list = self.expression_list()?;
            return Ok(Expression::In { operand: Box::new(left), list, negated });
        }
        Ok(left)
    }

    fn expression_list(&mut self) -> PResult<Vec<Expression>> {
        self.expect_punct("(", "to open the expression list")?;
        let mut list = Vec::new();
        if self.eat_punct(")") {
            return Ok(list);
        }
        loop {
            list.push(self.expression()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")", "to close the expression list")?;
        Ok(list)
    }

    fn additive(&mut self) -> PResult<Expression> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => BinaryOp::Add,
                Tok::Punct("-") => BinaryOp::Subtract,
                _ => return Ok(left),
            };
            self.next();
            let right = self.multiplicative()?;
            left = binary(op, left, right);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expression> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => BinaryOp::Multiply,
                Tok::Punct("/") => BinaryOp::Divide,
                _ => return Ok(left),
            };
            self.next();
            let right = self.unary()?;
            left = binary(op, left, right);
        }
    }

    fn unary(&mut self) -> PResult<Expression> {
        let op = match self.peek() {
            Tok::Punct("!") => UnaryOp::Not,
            Tok::Punct("+") => UnaryOp::Plus,
            Tok::Punct("-") => UnaryOp::Minus,
            _ => return self.primary(),
        };
        self.next();
        Ok(Expression::Unary { op, operand: Box::new(self.primary()?) })
    }

    fn primary(&mut self) -> PResult<Expression> {
        let tok = self.peek().clone();
        match tok {
            Tok::Punct("(") => self.bracketted_expression(),
            Tok::Var(v) => {
                self.next();
                Ok(Expression::Variable(v))
            }
            Tok::Iri(_) | Tok::PName { .. } => {
                let iri = self.iri()?;
                if self.peek().is_punct("(") {
                    self.call(Function::Iri(iri), false)
                } else {
                    Ok(Expression::Iri(iri))
                }
            }
            Tok::Str(_) | Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_) => {
                Ok(Expression::Literal(self.literal()?))
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false") => {
                Ok(Expression::Literal(self.literal()?))
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("NOT") && self.peek_at(1).is_word("EXISTS") => {
                self.next();
                self.next();
                self.negated_depth += 1;
                let pattern = self.group_graph_pattern();
                self.negated_depth -= 1;
                Ok(Expression::Exists { negated: true, pattern: pattern? })
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("EXISTS") => {
                self.next();
                Ok(Expression::Exists { negated: false, pattern: self.group_graph_pattern()? })
            }
            Tok::Word(w) if self.peek_at(1).is_punct("(") => {
                self.next();
                let name = w.to_ascii_uppercase();
                let aggregate = matches!(
                    name.as_str(),
                    "COUNT" | "SUM" | "MIN" | "MAX" | "AVG" | "SAMPLE" | "GROUP_CONCAT"
                );
                self.call(Function::Builtin(name), aggregate)
            }
            _ => Err(self.expected("an expression")),
        }
    }

    fn call(&mut self, function: Function, aggregate: bool) -> PResult<Expression> {
        self.expect_punct("(", "to open the argument list")?;
        let mut distinct = false;
        let mut star = false;
        let mut args = Vec::new();
        let mut separator = None;
        if !self.eat_punct(")") {
            if self.eat_word("DISTINCT") {
                distinct = true;
            }
            let is_count = matches!(&function, Function::Builtin(n) if n == "COUNT");
            if is_count && self.eat_punct("*") {
                star = true;
            } else {
                loop {
                    args.push(self.expression()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            let is_concat = matches!(&function, Function::Builtin(n) if n == "GROUP_CONCAT");
            if is_concat && self.eat_punct(";") {
                self.expect_word("SEPARATOR")?;
                self.expect_punct("=", "after SEPARATOR")?;
                match self.next() {
                    Tok::Str(s) => separator = Some(s),
                    _ => {
                        self.pos -= 1;
                        return Err(self.expected("a string after SEPARATOR ="));
                    }
                }
            }
            self.expect_punct(")", "to close the argument list")?;
        }
        if distinct && !aggregate && !matches!(function, Function::Iri(_)) {
            return Err(self.error_here("DISTINCT is only allowed inside aggregate functions"));
        }
        Ok(Expression::Call { function, distinct, star, args, separator })
    }
}

fn binary(op: BinaryOp, left: Expression, right: Expression) -> Expression {
    Expression::Binary { op, left: Box::new(left), right: Box::new(right) }
}

fn is_not_triples_keyword(w: &str) -> bool {
    NOT_TRIPLES_KEYWORDS.iter().any(|k| w.eq_ignore_ascii_case(k))
}

fn has_scheme(iri: &str) -> bool {
    match iri.find(':') {
        Some(i) => {
            let scheme = &iri[..i];
            !scheme.is_empty()
                && scheme.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                && scheme.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
        }
        None => false,
    }
}

fn resolve_relative(base: &str, rel: &str) -> String {
    if rel.is_empty() {
        return base.to_string();
    }
    if rel.starts_with('#') {
        let stem = base.split('#').next().unwrap_or(base);
        return format!("{stem}{rel}");
    }
    if let Some(stripped) = rel.strip_prefix("//") {
        let scheme = base.split(':').next().unwrap_or("http");
        return format!("{scheme}://{stripped}");
    }
    if rel.starts_with('/') {
        if let Some(idx) = base.find("://") {
            let after = &base[idx + 3..];
            let host_end = after.find('/').map_or(base.len(), |i| idx + 3 + i);
            return format!("{}{rel}", &base[..host_end]);
        }
    }
    match base.rfind('/') {
        Some(i) => format!("{}{rel}", &base[..=i]),
        None => format!("{base}{rel}"),
    }
}

/// Variables visible to `SELECT *`: first appearance order over the pattern.
fn projected(projection: &Projection, where_clause: &GroupPattern) -> Vec<String> {
    match projection {
        Projection::Items(items) => items
            .iter()
            .map(|i| match i {
                ProjectionItem::Variable(v) => v.clone(),
                ProjectionItem::Expression { alias, .. } => alias.clone(),
            })
            .collect(),
        Projection::All => {
            let mut out = Vec::new();
            in_scope(where_clause, &mut out);
            out
        }
    }
}

fn in_scope(group: &GroupPattern, out: &mut Vec<String>) {
    let add = |v: &str, out: &mut Vec<String>| {
        if !out.iter().any(|x| x == v) {
            out.push(v.to_string());
        }
    };
    for element in &group.0 {
        match element {
            PatternElement::Triples(ts) => {
                for t in ts {
                    for term in [&t.subject, &t.predicate, &t.object] {
                        if let Term::Variable(v) = term {
                            add(v, out);
                        }
                    }
                }
            }
            PatternElement::Group(g) | PatternElement::Optional(g) => in_scope(g, out),
            PatternElement::Union(gs) => gs.iter().for_each(|g| in_scope(g, out)),
            PatternElement::Graph { name, pattern } => {
                if let Term::Variable(v) = name {
                    add(v, out);
                }
                in_scope(pattern, out);
            }
            PatternElement::Service { pattern, .. } => in_scope(pattern, out),
            PatternElement::Bind { variable, .. } => add(variable, out),
            PatternElement::Values(data) => data.variables.iter().for_each(|v| add(v, out)),
            PatternElement::SubSelect(sub) => {
                for v in projected(&sub.select.projection, &sub.where_clause) {
                    add(&v, out);
                }
            }
            PatternElement::Minus(_) | PatternElement::Filter(_) => {}
        }
    }
}
