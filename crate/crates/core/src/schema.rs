//! Class-property matrix built from VoID records, ShEx rendering and
//! frequency-based truncation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harvest::RawVoidRecord;
use crate::iri::{humanize, local_name, PrefixMap};
use crate::sparql::RDF_TYPE;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaError {
    #[error("schema fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("malformed shape at token {position}: {message}")]
    MalformedShape { position: usize, message: String },
}

/// What one predicate points to from one class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellConstraint {
    pub object_classes: BTreeSet<String>,
    pub object_datatypes: BTreeSet<String>,
    /// Some objects carry neither a class nor a datatype.
    #[serde(default)]
    pub untyped: bool,
    pub triple_count: u64,
}

/// Sparse (class, predicate) matrix, both axes sorted by descending weight
/// with ascending IRI as tie-break.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassPropertyMatrix {
    classes: Vec<(String, u64)>,
    predicates: Vec<(String, u64)>,
    cells: BTreeMap<(usize, usize), CellConstraint>,
    class_index: HashMap<String, usize>,
    predicate_index: HashMap<String, usize>,
}

fn sort_axis(weights: BTreeMap<String, u64>) -> Vec<(String, u64)> {
    let mut axis: Vec<_> = weights.into_iter().collect();
    axis.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    axis
}

/// Builds the matrix. A class weighs the sum of its records' triple counts;
/// a predicate weighs the sum of its triple counts across all classes.
pub fn build_matrix(records: &[RawVoidRecord]) -> ClassPropertyMatrix {
    let mut class_weight: BTreeMap<String, u64> = BTreeMap::new();
    let mut predicate_weight: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        *class_weight.entry(r.subject_class.clone()).or_default() += r.triple_count;
        *predicate_weight.entry(r.predicate.clone()).or_default() += r.triple_count;
    }
    let classes = sort_axis(class_weight);
    let predicates = sort_axis(predicate_weight);
    let class_index: HashMap<_, _> = classes.iter().enumerate().map(|(i, (c, _))| (c.clone(), i)).collect();
    let predicate_index: HashMap<_, _> =
        predicates.iter().enumerate().map(|(i, (p, _))| (p.clone(), i)).collect();
    let mut cells: BTreeMap<(usize, usize), CellConstraint> = BTreeMap::new();
    for r in records {
        let cell = cells
            .entry((class_index[&r.subject_class], predicate_index[&r.predicate]))
            .or_default();
        cell.triple_count += r.triple_count;
        match (&r.object_class, &r.object_datatype) {
            (Some(c), _) => {
                cell.object_classes.insert(c.clone());
            }
            (None, Some(d)) => {
                cell.object_datatypes.insert(d.clone());
            }
            (None, None) => cell.untyped = true,
        }
    }
    ClassPropertyMatrix { classes, predicates, cells, class_index, predicate_index }
}

impl ClassPropertyMatrix {
    /// Classes with their weights, heaviest first.
    pub fn classes(&self) -> &[(String, u64)] {
        &self.classes
    }

    pub fn predicates(&self) -> &[(String, u64)] {
        &self.predicates
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), &CellConstraint)> {
        self.cells.iter().map(|(k, v)| (*k, v))
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty() && self.predicates.is_empty()
    }

    pub fn has_class(&self, iri: &str) -> bool {
        self.class_index.contains_key(iri)
    }

    pub fn has_predicate(&self, iri: &str) -> bool {
        iri == RDF_TYPE || self.predicate_index.contains_key(iri)
    }

    pub fn class_weight(&self, iri: &str) -> Option<u64> {
        self.class_index.get(iri).map(|&i| self.classes[i].1)
    }

    pub fn predicate_weight(&self, iri: &str) -> Option<u64> {
        self.predicate_index.get(iri).map(|&i| self.predicates[i].1)
    }

    pub fn cell(&self, class: &str, predicate: &str) -> Option<&CellConstraint> {
        let c = *self.class_index.get(class)?;
        let p = *self.predicate_index.get(predicate)?;
        self.cells.get(&(c, p))
    }

    /// Predicates used by `class`, in matrix order.
    pub fn row(&self, class: &str) -> Vec<(&str, &CellConstraint)> {
        let Some(&c) = self.class_index.get(class) else { return Vec::new() };
        self.cells
            .range((c, 0)..(c + 1, 0))
            .map(|(&(_, p), cell)| (self.predicates[p].0.as_str(), cell))
            .collect()
    }

    /// Classes that have `predicate` in their row.
    pub fn classes_with(&self, predicate: &str) -> Vec<&str> {
        let Some(&p) = self.predicate_index.get(predicate) else { return Vec::new() };
        self.cells
            .keys()
            .filter(|(_, pi)| *pi == p)
            .map(|(c, _)| self.classes[*c].0.as_str())
            .collect()
    }
}

/// `ceil(fraction * n)`, ignoring floating-point noise just above an integer.
pub fn truncated_len(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let raw = fraction * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (k as usize).clamp(1, n)
}

/// Keeps the top `ceil(fraction * n)` classes and predicates and the cells
/// between them.
pub fn truncate_matrix(
    m: &ClassPropertyMatrix,
    fraction: f64,
) -> Result<ClassPropertyMatrix, SchemaError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SchemaError::InvalidFraction(fraction));
    }
    let nc = truncated_len(m.classes.len(), fraction);
    let np = truncated_len(m.predicates.len(), fraction);
    let classes = m.classes[..nc].to_vec();
    let predicates = m.predicates[..np].to_vec();
    let cells = m
        .cells
        .iter()
        .filter(|((c, p), _)| *c < nc && *p < np)
        .map(|(k, v)| (*k, v.clone()))
        .collect();
    let class_index = classes.iter().enumerate().map(|(i, (c, _))| (c.clone(), i)).collect();
    let predicate_index = predicates.iter().enumerate().map(|(i, (p, _))| (p.clone(), i)).collect();
    Ok(ClassPropertyMatrix { classes, predicates, cells, class_index, predicate_index })
}

/// One class rendered as a self-contained ShEx shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaShape {
    pub class_iri: String,
    pub predicate_constraints: Vec<(String, CellConstraint)>,
    pub rendered_shex: String,
}

/// Shape label: `shape:` plus the class's prefixed name with `:` replaced by `_`.
pub fn shape_label(class_iri: &str, prefixes: &PrefixMap) -> String {
    match prefixes.split(class_iri) {
        Some((p, local)) => format!("shape:{p}_{local}"),
        None => format!("<{class_iri}>"),
    }
}

fn render_constraint(cell: &CellConstraint, prefixes: &PrefixMap) -> String {
    let mut parts = Vec::new();
    if !cell.object_classes.is_empty() {
        let names: Vec<_> = cell.object_classes.iter().map(|c| prefixes.compact(c)).collect();
        parts.push(format!("[ {} ]", names.join(" ")));
    }
    parts.extend(cell.object_datatypes.iter().map(|d| prefixes.compact(d)));
    if cell.untyped || parts.is_empty() {
        parts.push("IRI".to_string());
    }
    parts.join(" OR ")
}

/// Renders one shape per class that has at least one predicate, e.g.
///
/// ```text
/// shape:up_Disease_Annotation {
///   a [ up:Disease_Annotation ] ;
///   rdfs:comment xsd:string ;
///   up:disease IRI
/// }
/// ```
///
/// Object classes are bracketed, datatypes bare, untyped objects `IRI`;
/// alternatives are joined with `OR`.
pub fn render_shapes(m: &ClassPropertyMatrix, prefixes: &PrefixMap) -> Vec<SchemaShape> {
    m.classes
        .iter()
        .filter_map(|(class, _)| {
            let row = m.row(class);
            if row.is_empty() {
                return None;
            }
            let mut text = format!("{} {{\n  a [ {} ]", shape_label(class, prefixes), prefixes.compact(class));
            for (p, cell) in &row {
                let _ = write!(text, " ;\n  {} {}", prefixes.compact(p), render_constraint(cell, prefixes));
            }
            text.push_str("\n}");
            Some(SchemaShape {
                class_iri: class.clone(),
                predicate_constraints: row.into_iter().map(|(p, c)| (p.to_string(), c.clone())).collect(),
                rendered_shex: text,
            })
        })
        .collect()
}

/// Plain-language summary of a shape, used as its embedding text.
pub fn shape_summary_text(shape: &SchemaShape) -> String {
    let class_name = humanize(local_name(&shape.class_iri));
    let mut text = format!("{class_name} ({}) has the properties: ", shape.class_iri);
    let described: Vec<String> = shape
        .predicate_constraints
        .iter()
        .map(|(p, cell)| {
            let mut targets: Vec<String> =
                cell.object_classes.iter().map(|c| humanize(local_name(c))).collect();
            targets.extend(cell.object_datatypes.iter().map(|d| local_name(d).to_string()));
            if targets.is_empty() {
                local_name(p).to_string()
            } else {
                format!("{} ({})", local_name(p), targets.join(", "))
            }
        })
        .collect();
    text.push_str(&described.join("; "));
    text.push('.');
    text
}

/// Splits rendered ShEx into tokens; brackets, braces and `;` stand alone.
pub fn shex_tokens(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '[' | ']' | '{' | '}' | ';') {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

/// Content of a rendered shape, read back from its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedShape {
    pub class_iri: String,
    pub predicates: Vec<(String, CellConstraint)>,
}

/// Reads a shape produced by [`render_shapes`]. Triple counts are not part of
/// the text and come back as zero.
pub fn parse_shape(text: &str, prefixes: &PrefixMap) -> Result<ParsedShape, SchemaError> {
    let tokens = shex_tokens(text);
    let mut pos = 0;
    let err = |position: usize, message: &str| SchemaError::MalformedShape {
        position,
        message: message.to_string(),
    };
    let expand = |tok: &str, position: usize| {
        prefixes.expand(tok).ok_or_else(|| err(position, &format!("cannot expand {tok}")))
    };
    let expect = |pos: &mut usize, want: &str| {
        if tokens.get(*pos).map(String::as_str) == Some(want) {
            *pos += 1;
            Ok(())
        } else {
            Err(err(*pos, &format!("expected {want}")))
        }
    };
    pos += 1; // label
    expect(&mut pos, "{")?;
    expect(&mut pos, "a")?;
    expect(&mut pos, "[")?;
    let class_iri = expand(tokens.get(pos).ok_or_else(|| err(pos, "missing class"))?, pos)?;
    pos += 1;
    expect(&mut pos, "]")?;
    let mut predicates = Vec::new();
    while tokens.get(pos).map(String::as_str) == Some(";") {
        pos += 1;
        let p = expand(tokens.get(pos).ok_or_else(|| err(pos, "missing predicate"))?, pos)?;
        pos += 1;
        let mut cell = CellConstraint::default();
        loop {
            match tokens.get(pos).map(String::as_str) {
                Some("[") => {
                    pos += 1;
                    while let Some(t) = tokens.get(pos).filter(|t| *t != "]") {
                        cell.object_classes.insert(expand(t, pos)?);
                        pos += 1;
                    }
                    expect(&mut pos, "]")?;
                }
                Some("IRI") => {
                    cell.untyped = true;
                    pos += 1;
                }
                Some(t) if t != ";" && t != "}" => {
                    cell.object_datatypes.insert(expand(t, pos)?);
                    pos += 1;
                }
                _ => return Err(err(pos, "missing object constraint")),
            }
            if tokens.get(pos).map(String::as_str) == Some("OR") {
                pos += 1;
            } else {
                break;
            }
        }
        predicates.push((p, cell));
    }
    expect(&mut pos, "}")?;
    if pos != tokens.len() {
        return Err(err(pos, "trailing tokens"));
    }
    Ok(ParsedShape { class_iri, predicates })
}

/// Writes `<label>.shex` per shape plus `all.shex` with every shape.
pub fn export_shapes(shapes: &[SchemaShape], prefixes: &PrefixMap, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut header = String::from("PREFIX shape: <https://sparqlgen.dev/shape/>\n");
    for (p, ns) in prefixes.iter() {
        let _ = writeln!(header, "PREFIX {p}: <{ns}>");
    }
    let mut all = header.clone();
    for shape in shapes {
        let label = shape_label(&shape.class_iri, prefixes);
        let file: String = label
            .trim_start_matches("shape:")
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect();
        fs::write(dir.join(format!("{file}.shex")), format!("{header}\n{}\n", shape.rendered_shex))?;
        all.push('\n');
        all.push_str(&shape.rendered_shex);
        all.push('\n');
    }
    fs::write(dir.join("all.shex"), all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(c: &str, p: &str, n: u64) -> RawVoidRecord {
        RawVoidRecord {
            subject_class: c.into(),
            predicate: p.into(),
            object_class: None,
            object_datatype: None,
            triple_count: n,
            subject_instance_count: 1,
        }
    }

    #[test]
    fn empty_matrix() {
        let m = build_matrix(&[]);
        assert!(m.is_empty());
        assert!(render_shapes(&m, &PrefixMap::default()).is_empty());
        assert!(truncate_matrix(&m, 0.5).unwrap().is_empty());
    }

    #[test]
    fn axes_sorted_by_summed_counts() {
        let m = build_matrix(&[rec("http://x/A", "http://x/p", 10), rec("http://x/A", "http://x/q", 5), rec("http://x/B", "http://x/p", 1)]);
        assert_eq!(m.classes(), [("http://x/A".to_string(), 15), ("http://x/B".to_string(), 1)]);
        assert_eq!(m.predicates(), [("http://x/p".to_string(), 11), ("http://x/q".to_string(), 5)]);
        assert_eq!(m.cell("http://x/A", "http://x/p").unwrap().triple_count, 10);
        assert!(m.cell("http://x/B", "http://x/q").is_none());
    }

    #[test]
    fn ties_break_on_iri() {
        let m = build_matrix(&[rec("http://x/Z", "http://x/p", 3), rec("http://x/A", "http://x/q", 3)]);
        assert_eq!(m.classes()[0].0, "http://x/A");
        assert_eq!(m.predicates()[0].0, "http://x/p");
    }

    #[test]
    fn fraction_bounds() {
        let m = build_matrix(&[rec("http://x/A", "http://x/p", 1)]);
        assert_eq!(truncate_matrix(&m, 0.0), Err(SchemaError::InvalidFraction(0.0)));
        assert!(truncate_matrix(&m, 1.5).is_err());
        assert!(truncate_matrix(&m, f64::NAN).is_err());
        assert_eq!(truncate_matrix(&m, 1.0).unwrap(), m);
        assert_eq!(truncated_len(10, 0.7), 7);
        assert_eq!(truncated_len(10, 0.71), 8);
        assert_eq!(truncated_len(3, 0.01), 1);
    }

    #[test]
    fn single_datatype_shape() {
        let mut r = rec("http://purl.uniprot.org/core/Protein", "http://purl.uniprot.org/core/mnemonic", 4);
        r.object_datatype = Some("http://www.w3.org/2001/XMLSchema#string".into());
        let shapes = render_shapes(&build_matrix(&[r]), &PrefixMap::default());
        assert_eq!(
            shapes[0].rendered_shex,
            "shape:up_Protein {\n  a [ up:Protein ] ;\n  up:mnemonic xsd:string\n}"
        );
    }

    #[test]
    fn mixed_constraint_round_trips() {
        let mut a = rec("http://x/A", "http://x/p", 2);
        a.object_class = Some("http://x/B".into());
        let mut b = rec("http://x/A", "http://x/p", 1);
        b.object_datatype = Some("http://www.w3.org/2001/XMLSchema#string".into());
        let c = rec("http://x/A", "http://x/p", 1);
        let prefixes = PrefixMap::default();
        let shape = &render_shapes(&build_matrix(&[a, b, c]), &prefixes)[0];
        assert!(shape.rendered_shex.contains("<http://x/p> [ <http://x/B> ] OR xsd:string OR IRI"));
        assert_eq!(shape_label("http://x/A", &prefixes), "<http://x/A>");
        let parsed = parse_shape(&shape.rendered_shex, &prefixes).unwrap();
        assert_eq!(parsed.class_iri, "http://x/A");
        let cell = &parsed.predicates[0].1;
        assert!(cell.untyped && cell.object_classes.len() == 1 && cell.object_datatypes.len() == 1);
    }

    #[test]
    fn malformed_shapes_are_rejected() {
        let p = PrefixMap::default();
        assert!(parse_shape("shape:x { a up:X }", &p).is_err());
        assert!(parse_shape("shape:x { a [ up:X ] ; up:p }", &p).is_err());
        assert!(parse_shape("shape:x { a [ nope:X ] }", &p).is_err());
        assert!(parse_shape("shape:x { a [ up:X ] } extra", &p).is_err());
    }
}
