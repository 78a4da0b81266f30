use super::ast::{Literal, Term};
use super::lexer::{tokenize, Tok};
use super::SyntaxError;

/// Parses an N-Triples document (the format endpoints return for
/// CONSTRUCT and DESCRIBE) into subject, predicate, object terms.
pub fn parse_ntriples(text: &str) -> Result<Vec<(Term, Term, Term)>, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut out = Vec::new();
    let mut i = 0;
    let err = |i: usize, what: &str| {
        SyntaxError::at(
            text,
            tokens[i].offset,
            format!("expected {what}, found {}", tokens[i].tok.describe()),
        )
    };
    while !matches!(tokens[i].tok, Tok::Eof) {
        let subject = match &tokens[i].tok {
            Tok::Iri(s) => Term::Iri(s.clone()),
            Tok::Blank(b) => Term::BlankNode(b.clone()),
            _ => return Err(err(i, "a subject IRI or blank node")),
        };
        i += 1;
        let predicate = match &tokens[i].tok {
            Tok::Iri(p) => Term::Iri(p.clone()),
            _ => return Err(err(i, "a predicate IRI")),
        };
        i += 1;
        let object = match &tokens[i].tok {
            Tok::Iri(o) => Term::Iri(o.clone()),
            Tok::Blank(b) => Term::BlankNode(b.clone()),
            Tok::Str(value) => {
                let mut lit = Literal { value: value.clone(), datatype: None, language: None };
                match &tokens[i + 1].tok {
                    Tok::LangTag(l) => {
                        lit.language = Some(l.clone());
                        i += 1;
                    }
                    Tok::DoubleCaret => match &tokens[i + 2].tok {
                        Tok::Iri(dt) => {
                            lit.datatype = Some(dt.clone());
                            i += 2;
                        }
                        _ => return Err(err(i + 2, "a datatype IRI")),
                    },
                    _ => {}
                }
                Term::Literal(lit)
            }
            _ => return Err(err(i, "an object")),
        };
        i += 1;
        if !tokens[i].tok.is_punct(".") {
            return Err(err(i, "'.'"));
        }
        i += 1;
        out.push((subject, predicate, object));
    }
    Ok(out)
}
