//! Tokenizer for SPARQL query text.
//!
//! The lexer is also reused to read N-Triples lines returned by CONSTRUCT
//! and DESCRIBE queries, which share the term syntax.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Content between `<` and `>`, unescaped.
    Iri(String),
    PName { prefix: String, local: String },
    Blank(String),
    Var(String),
    Str(String),
    LangTag(String),
    DoubleCaret,
    Integer(String),
    Decimal(String),
    Double(String),
    /// Keyword or bare identifier, original case.
    Word(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Iri(i) => format!("IRI <{i}>"),
            Tok::PName { prefix, local } => format!("prefixed name '{prefix}:{local}'"),
            Tok::Blank(b) => format!("blank node '_:{b}'"),
            Tok::Var(v) => format!("variable '?{v}'"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::LangTag(l) => format!("language tag '@{l}'"),
            Tok::DoubleCaret => "'^^'".to_string(),
            Tok::Integer(n) | Tok::Decimal(n) | Tok::Double(n) => format!("number '{n}'"),
            Tok::Word(w) => format!("'{w}'"),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of query".to_string(),
        }
    }

    pub(crate) fn is_word(&self, kw: &str) -> bool {
        matches!(self, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    pub(crate) fn is_punct(&self, p: &str) -> bool {
        matches!(self, Tok::Punct(q) if *q == p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

const PUNCTS: &[&str] = &[
    "^^", "&&", "||", "!=", "<=", ">=", "{", "}", "(", ")", "[", "]", ".", ";", ",", "*", "/",
    "|", "^", "?", "+", "!", "=", "<", ">", "-",
];

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer { text, pos: 0 }.run()
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || (!c.is_ascii() && c.is_alphabetic())
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || (!c.is_ascii() && c.is_alphanumeric())
}

fn is_iri_char(c: char) -> bool {
    !matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') && c > ' '
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError::at(self.text, offset, message)
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws_and_comments();
            let offset = self.pos;
            let Some(c) = self.peek() else {
                out.push(Token { tok: Tok::Eof, offset });
                return Ok(out);
            };
            let tok = match c {
                '<' => self.iri_or_less()?,
                '?' | '$' => self.var_or_question(),
                '"' | '\'' => Tok::Str(self.string()?),
                '@' => {
                    self.bump();
                    let start = self.pos;
                    while matches!(self.peek(), Some(ch) if ch.is_ascii_alphanumeric() || ch == '-')
                    {
                        self.bump();
                    }
                    if self.pos == start {
                        return Err(self.err(offset, "empty language tag after '@'"));
                    }
                    Tok::LangTag(self.text[start..self.pos].to_string())
                }
                '_' if self.peek_at(1) == Some(':') => {
                    self.pos += 2;
                    let start = self.pos;
                    while matches!(self.peek(), Some(ch) if is_name_char(ch) || ch == '.') {
                        self.bump();
                    }
                    self.unconsume_trailing_dots(start);
                    if self.pos == start {
                        return Err(self.err(offset, "empty blank node label after '_:'"));
                    }
                    Tok::Blank(self.text[start..self.pos].to_string())
                }
                c if c.is_ascii_digit() => self.number(),
                '.' if matches!(self.peek_at(1), Some(d) if d.is_ascii_digit()) => self.number(),
                ':' => self.pname(String::new())?,
                c if is_name_start(c) => {
                    let start = self.pos;
                    while matches!(self.peek(), Some(ch) if is_name_char(ch) || ch == '.') {
                        self.bump();
                    }
                    self.unconsume_trailing_dots(start);
                    let name = self.text[start..self.pos].to_string();
                    if self.peek() == Some(':') {
                        self.pname(name)?
                    } else {
                        Tok::Word(name)
                    }
                }
                _ => {
                    let rest = self.rest();
                    match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                        Some(p) => {
                            self.pos += p.len();
                            if *p == "^^" {
                                Tok::DoubleCaret
                            } else {
                                Tok::Punct(p)
                            }
                        }
                        None => {
                            return Err(self.err(offset, format!("unexpected character '{c}'")));
                        }
                    }
                }
            };
            out.push(Token { tok, offset });
        }
    }

    fn skip_ws_and_comments(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn unconsume_trailing_dots(&mut self, start: usize) {
        while self.pos > start && self.text[..self.pos].ends_with('.') {
            self.pos -= 1;
        }
    }

    fn iri_or_less(&mut self) -> Result<Tok, SyntaxError> {
        let rest = &self.rest()[1..];
        let mut end = None;
        for (i, c) in rest.char_indices() {
            if c == '>' {
                end = Some(i);
                break;
            }
            if !is_iri_char(c) {
                break;
            }
        }
        if let Some(end) = end {
            let iri = rest[..end].to_string();
            self.pos += end + 2;
            return Ok(Tok::Iri(iri));
        }
        if rest.starts_with('=') {
            self.pos += 2;
            Ok(Tok::Punct("<="))
        } else {
            self.pos += 1;
            Ok(Tok::Punct("<"))
        }
    }

    fn var_or_question(&mut self) -> Tok {
        match self.peek_at(1) {
            Some(c) if is_name_char(c) => {
                self.bump();
                let start = self.pos;
                while matches!(self.peek(), Some(ch) if is_name_char(ch) && ch != '-') {
                    self.bump();
                }
                Tok::Var(self.text[start..self.pos].to_string())
            }
            _ => {
                self.bump();
                Tok::Punct("?")
            }
        }
    }

    fn pname(&mut self, prefix: String) -> Result<Tok, SyntaxError> {
        // positioned on ':'
        self.bump();
        let mut local = String::new();
        let start = self.pos;
        loop {
            match self.peek() {
                Some('\\') => {
                    let at = self.pos;
                    self.bump();
                    match self.bump() {
                        Some(c) if "_~.-!$&'()*+,;=/?#@%".contains(c) => local.push(c),
                        _ => return Err(self.err(at, "invalid escape in prefixed name")),
                    }
                }
                Some('%') => {
                    let at = self.pos;
                    let hex: String = self.rest().chars().skip(1).take(2).collect();
                    if hex.len() == 2 && hex.chars().all(|h| h.is_ascii_hexdigit()) {
                        local.push('%');
                        local.push_str(&hex);
                        self.pos += 3;
                    } else {
                        return Err(self.err(at, "invalid percent escape in prefixed name"));
                    }
                }
                Some(c) if is_name_char(c) || c == '.' || c == ':' => {
                    local.push(c);
                    self.bump();
                }
                _ => break,
            }
        }
        while local.ends_with('.') && self.pos > start {
            local.pop();
            self.pos -= 1;
        }
        Ok(Tok::PName { prefix, local })
    }

    fn number(&mut self) -> Tok {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        let mut kind = 0; // 0 int, 1 decimal, 2 double
        if self.peek() == Some('.') && matches!(self.peek_at(1), Some(c) if c.is_ascii_digit()) {
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
            kind = 1;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                kind = 2;
            } else {
                self.pos = save;
            }
        }
        let s = self.text[start..self.pos].to_string();
        match kind {
            0 => Tok::Integer(s),
            1 => Tok::Decimal(s),
            _ => Tok::Double(s),
        }
    }

    fn string(&mut self) -> Result<String, SyntaxError> {
        let offset = self.pos;
        let quote = self.bump().unwrap();
        let long = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if long {
            self.pos += 2;
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(self.err(offset, "unterminated string literal"));
            };
            if c == quote {
                if !long {
                    return Ok(out);
                }
                if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                    // a long string may end with extra quote characters
                    if self.peek_at(2) == Some(quote) {
                        out.push(c);
                        continue;
                    }
                    self.pos += 2;
                    return Ok(out);
                }
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    let at = self.pos - 1;
                    let e = self
                        .bump()
                        .ok_or_else(|| self.err(at, "unterminated escape sequence"))?;
                    match e {
                        't' => out.push('\t'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        '"' => out.push('"'),
                        '\'' => out.push('\''),
                        '\\' => out.push('\\'),
                        'u' | 'U' => {
                            let n = if e == 'u' { 4 } else { 8 };
                            let hex: String = self.rest().chars().take(n).collect();
                            let code = u32::from_str_radix(&hex, 16)
                                .ok()
                                .filter(|_| hex.len() == n)
                                .and_then(char::from_u32)
                                .ok_or_else(|| self.err(at, "invalid unicode escape"))?;
                            self.pos += n;
                            out.push(code);
                        }
                        other => {
                            return Err(self.err(at, format!("invalid escape '\\{other}'")));
                        }
                    }
                }
                '\n' | '\r' if !long => {
                    return Err(self.err(offset, "line break inside short string literal"));
                }
                c => out.push(c),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn prefixed_names_drop_trailing_dot() {
        assert_eq!(
            toks("?c a dbo:Country."),
            vec![
                Tok::Var("c".into()),
                Tok::Word("a".into()),
                Tok::PName { prefix: "dbo".into(), local: "Country".into() },
                Tok::Punct("."),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn less_than_versus_iri() {
        assert_eq!(toks("<http://x/y>"), vec![Tok::Iri("http://x/y".into()), Tok::Eof]);
        assert_eq!(
            toks("?a < 3"),
            vec![Tok::Var("a".into()), Tok::Punct("<"), Tok::Integer("3".into()), Tok::Eof]
        );
        assert_eq!(
            toks("?a <= 3"),
            vec![Tok::Var("a".into()), Tok::Punct("<="), Tok::Integer("3".into()), Tok::Eof]
        );
    }

    #[test]
    fn strings_and_escapes() {
        assert_eq!(toks(r#""a\"b""#), vec![Tok::Str("a\"b".into()), Tok::Eof]);
        assert_eq!(toks("'''x\n'y'''"), vec![Tok::Str("x\n'y".into()), Tok::Eof]);
        assert_eq!(toks(r#""é""#), vec![Tok::Str("é".into()), Tok::Eof]);
        assert!(tokenize("\"open").is_err());
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(toks("# hi\n?x # there"), vec![Tok::Var("x".into()), Tok::Eof]);
    }

    #[test]
    fn numbers() {
        assert_eq!(
            toks("1 2.5 3e2 4."),
            vec![
                Tok::Integer("1".into()),
                Tok::Decimal("2.5".into()),
                Tok::Double("3e2".into()),
                Tok::Integer("4".into()),
                Tok::Punct("."),
                Tok::Eof
            ]
        );
    }
}
