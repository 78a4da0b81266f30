//! Canonical text form of a parsed query.
//!
//! Every IRI is written in full and every binary expression is parenthesized,
//! so re-parsing the output yields the same pattern groups.

use std::fmt::{self, Write};

use super::ast::*;
use super::ParsedQuery;

pub(crate) fn write_query(q: &ParsedQuery, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if let Some(base) = &q.base {
        writeln!(f, "BASE <{base}>")?;
    }
    for (label, iri) in &q.prefixes {
        writeln!(f, "PREFIX {label}: <{iri}>")?;
    }
    match &q.form {
        QueryForm::Select(select) => write_select_clause(f, select)?,
        QueryForm::Ask => f.write_str("ASK")?,
        QueryForm::Construct { template } => {
            f.write_str("CONSTRUCT {\n")?;
            for t in template {
                write_indent(f, 1)?;
                write_triple(f, t)?;
                f.write_str(" .\n")?;
            }
            f.write_str("}")?;
        }
        QueryForm::Describe { targets } => {
            f.write_str("DESCRIBE")?;
            if targets.is_empty() {
                f.write_str(" *")?;
            }
            for t in targets {
                f.write_char(' ')?;
                write_term(f, t)?;
            }
        }
    }
    f.write_char('\n')?;
    for d in &q.dataset {
        let named = if d.named { "NAMED " } else { "" };
        writeln!(f, "FROM {named}<{}>", d.iri)?;
    }
    f.write_str("WHERE ")?;
    write_group(f, &q.where_clause, 0)?;
    write_modifiers(f, &q.modifiers, 0)?;
    if let Some(values) = &q.values {
        f.write_char('\n')?;
        write_values(f, values, 0)?;
    }
    Ok(())
}

fn write_indent(f: &mut impl Write, level: usize) -> fmt::Result {
    for _ in 0..level {
        f.write_str("  ")?;
    }
    Ok(())
}

fn write_select_clause(f: &mut impl Write, select: &SelectClause) -> fmt::Result {
    f.write_str("SELECT")?;
    match select.modifier {
        Some(SelectModifier::Distinct) => f.write_str(" DISTINCT")?,
        Some(SelectModifier::Reduced) => f.write_str(" REDUCED")?,
        None => {}
    }
    match &select.projection {
        Projection::All => f.write_str(" *"),
        Projection::Items(items) => {
            for item in items {
                match item {
                    ProjectionItem::Variable(v) => write!(f, " ?{v}")?,
                    ProjectionItem::Expression { expression, alias } => {
                        f.write_str(" (")?;
                        write_expression(f, expression)?;
                        write!(f, " AS ?{alias})")?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn write_group(f: &mut impl Write, g: &GroupPattern, level: usize) -> fmt::Result {
    f.write_str("{\n")?;
    if let [PatternElement::SubSelect(sub)] = g.0.as_slice() {
        write_indent(f, level + 1)?;
        write_select_clause(f, &sub.select)?;
        f.write_str(" WHERE ")?;
        write_group(f, &sub.where_clause, level + 1)?;
        write_modifiers(f, &sub.modifiers, level + 1)?;
        if let Some(values) = &sub.values {
            f.write_char('\n')?;
            write_values(f, values, level + 1)?;
        }
        f.write_char('\n')?;
        write_indent(f, level)?;
        return f.write_str("}");
    }
    for element in &g.0 {
        write_element(f, element, level + 1)?;
    }
    write_indent(f, level)?;
    f.write_str("}")
}

fn write_element(f: &mut impl Write, e: &PatternElement, level: usize) -> fmt::Result {
    match e {
        PatternElement::Triples(ts) => {
            for t in ts {
                write_indent(f, level)?;
                write_triple(f, t)?;
                f.write_str(" .\n")?;
            }
            return Ok(());
        }
        PatternElement::SubSelect(sub) => {
            write_indent(f, level)?;
            let wrapped = GroupPattern(vec![PatternElement::SubSelect(sub.clone())]);
            write_group(f, &wrapped, level)?;
        }
        other => {
            write_indent(f, level)?;
            match other {
                PatternElement::Group(g) => write_group(f, g, level)?,
                PatternElement::Optional(g) => {
                    f.write_str("OPTIONAL ")?;
                    write_group(f, g, level)?;
                }
                PatternElement::Minus(g) => {
                    f.write_str("MINUS ")?;
                    write_group(f, g, level)?;
                }
                PatternElement::Union(gs) => {
                    for (i, g) in gs.iter().enumerate() {
                        if i > 0 {
                            f.write_str(" UNION ")?;
                        }
                        write_group(f, g, level)?;
                    }
                }
                PatternElement::Graph { name, pattern } => {
                    f.write_str("GRAPH ")?;
                    write_term(f, name)?;
                    f.write_char(' ')?;
                    write_group(f, pattern, level)?;
                }
                PatternElement::Service { silent, endpoint, pattern } => {
                    f.write_str(if *silent { "SERVICE SILENT " } else { "SERVICE " })?;
                    write_term(f, endpoint)?;
                    f.write_char(' ')?;
                    write_group(f, pattern, level)?;
                }
                PatternElement::Filter(e) => {
                    f.write_str("FILTER (")?;
                    write_expression(f, e)?;
                    f.write_char(')')?;
                }
                PatternElement::Bind { expression, variable } => {
                    f.write_str("BIND (")?;
                    write_expression(f, expression)?;
                    write!(f, " AS ?{variable})")?;
                }
                PatternElement::Values(data) => write_values(f, data, level)?,
                PatternElement::Triples(_) | PatternElement::SubSelect(_) => unreachable!(),
            }
        }
    }
    f.write_char('\n')
}

fn write_modifiers(f: &mut impl Write, m: &SolutionModifiers, level: usize) -> fmt::Result {
    if !m.group_by.is_empty() {
        f.write_char('\n')?;
        write_indent(f, level)?;
        f.write_str("GROUP BY")?;
        for c in &m.group_by {
            f.write_str(" (")?;
            write_expression(f, &c.expression)?;
            if let Some(alias) = &c.alias {
                write!(f, " AS ?{alias}")?;
            }
            f.write_char(')')?;
        }
    }
    if !m.having.is_empty() {
        f.write_char('\n')?;
        write_indent(f, level)?;
        f.write_str("HAVING")?;
        for e in &m.having {
            f.write_str(" (")?;
            write_expression(f, e)?;
            f.write_char(')')?;
        }
    }
    if !m.order_by.is_empty() {
        f.write_char('\n')?;
        write_indent(f, level)?;
        f.write_str("ORDER BY")?;
        for o in &m.order_by {
            f.write_str(if o.descending { " DESC(" } else { " ASC(" })?;
            write_expression(f, &o.expression)?;
            f.write_char(')')?;
        }
    }
    if let Some(limit) = m.limit {
        f.write_char('\n')?;
        write_indent(f, level)?;
        write!(f, "LIMIT {limit}")?;
    }
    if let Some(offset) = m.offset {
        f.write_char('\n')?;
        write_indent(f, level)?;
        write!(f, "OFFSET {offset}")?;
    }
    Ok(())
}

fn write_values(f: &mut impl Write, data: &InlineData, level: usize) -> fmt::Result {
    f.write_str("VALUES (")?;
    for (i, v) in data.variables.iter().enumerate() {
        if i > 0 {
            f.write_char(' ')?;
        }
        write!(f, "?{v}")?;
    }
    f.write_str(") {\n")?;
    for row in &data.rows {
        write_indent(f, level + 1)?;
        f.write_char('(')?;
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                f.write_char(' ')?;
            }
            match cell {
                Some(t) => write_term(f, t)?,
                None => f.write_str("UNDEF")?,
            }
        }
        f.write_str(")\n")?;
    }
    write_indent(f, level)?;
    f.write_char('}')
}

pub(crate) fn write_triple(f: &mut impl Write, t: &TriplePattern) -> fmt::Result {
    write_term(f, &t.subject)?;
    f.write_char(' ')?;
    write_term(f, &t.predicate)?;
    f.write_char(' ')?;
    write_term(f, &t.object)
}

pub(crate) fn write_term(f: &mut impl Write, t: &Term) -> fmt::Result {
    match t {
        Term::Variable(v) => write!(f, "?{v}"),
        Term::Iri(i) => write!(f, "<{i}>"),
        Term::BlankNode(b) => write!(f, "_:{b}"),
        Term::Literal(l) => write_literal(f, l),
        Term::Path(p) => {
            f.write_char('(')?;
            write_path(f, p)?;
            f.write_char(')')
        }
    }
}

fn write_literal(f: &mut impl Write, l: &Literal) -> fmt::Result {
    f.write_char('"')?;
    for c in l.value.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')?;
    if let Some(lang) = &l.language {
        write!(f, "@{lang}")?;
    } else if let Some(dt) = &l.datatype {
        write!(f, "^^<{dt}>")?;
    }
    Ok(())
}

fn write_path(f: &mut impl Write, p: &PropertyPath) -> fmt::Result {
    match p {
        PropertyPath::Iri(i) => write!(f, "<{i}>"),
        PropertyPath::Inverse(inner) => {
            f.write_str("^(")?;
            write_path(f, inner)?;
            f.write_char(')')
        }
        PropertyPath::Sequence(ps) | PropertyPath::Alternative(ps) => {
            let sep = if matches!(p, PropertyPath::Sequence(_)) { " / " } else { " | " };
            for (i, step) in ps.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                f.write_char('(')?;
                write_path(f, step)?;
                f.write_char(')')?;
            }
            Ok(())
        }
        PropertyPath::ZeroOrMore(inner) | PropertyPath::OneOrMore(inner) | PropertyPath::ZeroOrOne(inner) => {
            f.write_char('(')?;
            write_path(f, inner)?;
            f.write_char(')')?;
            f.write_str(match p {
                PropertyPath::ZeroOrMore(_) => "*",
                PropertyPath::OneOrMore(_) => "+",
                _ => "?",
            })
        }
        PropertyPath::Negated(set) => {
            f.write_str("!(")?;
            for (i, (iri, inverse)) in set.iter().enumerate() {
                if i > 0 {
                    f.write_str(" | ")?;
                }
                if *inverse {
                    f.write_char('^')?;
                }
                write!(f, "<{iri}>")?;
            }
            f.write_char(')')
        }
    }
}

pub(crate) fn write_expression(f: &mut impl Write, e: &Expression) -> fmt::Result {
    match e {
        Expression::Variable(v) => write!(f, "?{v}"),
        Expression::Iri(i) => write!(f, "<{i}>"),
        Expression::Literal(l) => write_literal(f, l),
        Expression::Binary { op, left, right } => {
            f.write_char('(')?;
            write_expression(f, left)?;
            write!(f, " {} ", op.symbol())?;
            write_expression(f, right)?;
            f.write_char(')')
        }
        Expression::Unary { op, operand } => {
            f.write_str(match op {
                UnaryOp::Not => "!",
                UnaryOp::Plus => "+",
                UnaryOp::Minus => "-",
            })?;
            f.write_char('(')?;
            write_expression(f, operand)?;
            f.write_char(')')
        }
        Expression::In { operand, list, negated } => {
            f.write_char('(')?;
            write_expression(f, operand)?;
            f.write_str(if *negated { " NOT IN (" } else { " IN (" })?;
            for (i, x) in list.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expression(f, x)?;
            }
            f.write_str("))")
        }
        Expression::Call { function, distinct, star, args, separator } => {
            match function {
                Function::Builtin(name) => f.write_str(name)?,
                Function::Iri(iri) => write!(f, "<{iri}>")?,
            }
            f.write_char('(')?;
            if *distinct {
                f.write_str("DISTINCT ")?;
            }
            if *star {
                f.write_char('*')?;
            }
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expression(f, a)?;
            }
            if let Some(sep) = separator {
                f.write_str("; SEPARATOR=")?;
                write_literal(f, &Literal { value: sep.clone(), datatype: None, language: None })?;
            }
            f.write_char(')')
        }
        Expression::Exists { negated, pattern } => {
            f.write_str(if *negated { "NOT EXISTS " } else { "EXISTS " })?;
            write_group(f, pattern, 1)
        }
    }
}

/// One triple pattern in the same notation used for whole queries.
pub fn triple_to_string(t: &TriplePattern) -> String {
    let mut s = String::new();
    write_triple(&mut s, t).expect("writing to a String cannot fail");
    s
}

pub fn term_to_string(t: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, t).expect("writing to a String cannot fail");
    s
}
