//! Parser for the continuous query surface syntax:
//!
//! ```text
//! STREAMING { WINDOW [10 Seconds] SLIDE [10 Seconds] BATCH [5 Seconds] }
//! REGISTER { QUERYID [Q8] SPARQL [ <SPARQL SELECT query> ] }
//! ```
//!
//! The SPARQL part supports PREFIX declarations, SELECT with a variable list
//! or `*`, basic graph patterns with `;` and `,` abbreviations, one level of
//! UNION, and optional `(label)` annotations after objects.

use std::collections::HashMap;

use super::{
    valid_variable_name, Bgp, ContinuousQuerySpec, PatternTerm, QueryAlgebra, QueryError, TriplePattern,
    Variable,
};
use crate::rdf::{Term, RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER};

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "FILTER", "OPTIONAL", "BIND", "VALUES", "MINUS", "GRAPH", "SERVICE", "GROUP", "ORDER", "LIMIT",
    "OFFSET", "HAVING", "DISTINCT", "REDUCED", "FROM", "CONSTRUCT", "ASK", "DESCRIBE", "BASE",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    PName(String, String),
    Literal { lexical: String, lang: Option<String>, datatype: Option<Box<Tok>> },
    Number(String, &'static str),
    Punct(char),
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Word(w) => w.clone(),
            Tok::Var(v) => format!("?{v}"),
            Tok::Iri(i) => format!("<{i}>"),
            Tok::PName(p, l) => format!("{p}:{l}"),
            Tok::Literal { lexical, .. } => format!("\"{lexical}\""),
            Tok::Number(n, _) => n.clone(),
            Tok::Punct(c) => c.to_string(),
        }
    }

    fn is_word(&self, kw: &str) -> bool {
        matches!(self, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    _src: &'a str,
}

fn syntax(line: usize, token: impl Into<String>, expected: impl Into<String>) -> QueryError {
    QueryError::Syntax { line, token: token.into(), expected: expected.into() }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, first_line: usize) -> Self {
        Lexer { chars: src.chars().collect(), pos: 0, line: first_line, _src: src }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while !matches!(self.peek(), None | Some('\n')) {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn iri(&mut self) -> Result<String, QueryError> {
        let line = self.line;
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('>') => return Ok(s),
                Some(c) if c.is_whitespace() => return Err(syntax(line, format!("<{s}"), "'>' closing IRI")),
                Some(c) => s.push(c),
                None => return Err(syntax(line, format!("<{s}"), "'>' closing IRI")),
            }
        }
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if is_word_char(c)) {
            self.bump();
        }
        // a trailing '.' ends the triple, it is not part of the name
        while self.pos > start && self.chars[self.pos - 1] == '.' {
            self.pos -= 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn string(&mut self, quote: char) -> Result<String, QueryError> {
        let line = self.line;
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(syntax(line, format!("{quote}{s}"), "closing quote")),
                Some(c) if c == quote => return Ok(s),
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('b') => '\u{8}',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        other => {
                            return Err(syntax(line, format!("\\{}", other.unwrap_or(' ')), "valid escape"))
                        }
                    };
                    s.push(c);
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn word_token(&self, w: String) -> Tok {
        match w.split_once(':') {
            Some((p, l)) => Tok::PName(p.to_string(), l.to_string()),
            None => Tok::Word(w),
        }
    }

    fn number(&mut self) -> Tok {
        let start = self.pos;
        if matches!(self.peek(), Some('+' | '-')) {
            self.bump();
        }
        let mut kind = XSD_INTEGER;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') && matches!(self.peek_at(1), Some(c) if c.is_ascii_digit()) {
            kind = XSD_DECIMAL;
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            kind = XSD_DOUBLE;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        Tok::Number(self.chars[start..self.pos].iter().collect(), kind)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, QueryError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let line = self.line;
            let Some(c) = self.peek() else { return Ok(out) };
            let tok = match c {
                '<' if matches!(self.peek_at(1), Some(n) if !n.is_whitespace() && n != '=') => Tok::Iri(self.iri()?),
                '?' | '$' => {
                    self.bump();
                    let start = self.pos;
                    while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
                        self.bump();
                    }
                    let name: String = self.chars[start..self.pos].iter().collect();
                    if !valid_variable_name(&name) {
                        return Err(syntax(line, format!("?{name}"), "variable name matching [A-Za-z][A-Za-z0-9]*"));
                    }
                    Tok::Var(name)
                }
                '"' | '\'' => {
                    let lexical = self.string(c)?;
                    let mut lang = None;
                    let mut datatype = None;
                    if self.peek() == Some('@') {
                        self.bump();
                        let start = self.pos;
                        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '-') {
                            self.bump();
                        }
                        lang = Some(self.chars[start..self.pos].iter().collect());
                    } else if self.peek() == Some('^') && self.peek_at(1) == Some('^') {
                        self.bump();
                        self.bump();
                        let dt = match self.peek() {
                            Some('<') => Tok::Iri(self.iri()?),
                            Some(c) if is_word_char(c) => {
                                let w = self.word();
                                self.word_token(w)
                            }
                            _ => return Err(syntax(line, "^^", "datatype IRI")),
                        };
                        datatype = Some(Box::new(dt));
                    }
                    Tok::Literal { lexical, lang, datatype }
                }
                c if c.is_ascii_digit()
                    || (matches!(c, '+' | '-') && matches!(self.peek_at(1), Some(d) if d.is_ascii_digit())) =>
                {
                    self.number()
                }
                c if c.is_alphabetic() || c == '_' || c == ':' => {
                    let w = self.word();
                    if w.is_empty() {
                        self.bump();
                        Tok::Punct(c)
                    } else {
                        self.word_token(w)
                    }
                }
                c => {
                    self.bump();
                    Tok::Punct(c)
                }
            };
            out.push((tok, line));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    last_line: usize,
    prefixes: HashMap<String, String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map(|(_, l)| *l).unwrap_or(self.last_line)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> QueryError {
        let token = self.peek().map(Tok::text).unwrap_or_else(|| "end of input".into());
        syntax(self.line(), token, expected)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), QueryError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("'{c}'")))
        }
    }

    fn check_unsupported(&self) -> Result<(), QueryError> {
        match self.peek() {
            Some(Tok::Word(w)) if UNSUPPORTED_KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(w)) => {
                Err(QueryError::Unsupported(w.to_ascii_uppercase()))
            }
            _ => Ok(()),
        }
    }

    fn query(&mut self) -> Result<QueryAlgebra, QueryError> {
        while self.peek().is_some_and(|t| t.is_word("PREFIX")) {
            self.pos += 1;
            let (prefix, local) = match self.next() {
                Some(Tok::PName(p, l)) => (p, l),
                _ => {
                    self.pos -= 1;
                    return Err(self.error("prefix name ending in ':'"));
                }
            };
            if !local.is_empty() {
                self.pos -= 1;
                return Err(self.error("prefix name ending in ':'"));
            }
            let Some(Tok::Iri(iri)) = self.next() else {
                self.pos -= 1;
                return Err(self.error("IRI for prefix"));
            };
            self.prefixes.insert(prefix, iri);
        }
        self.check_unsupported()?;
        if !self.peek().is_some_and(|t| t.is_word("SELECT")) {
            return Err(self.error("SELECT"));
        }
        self.pos += 1;
        self.check_unsupported()?;

        let mut projection = Vec::new();
        let mut star = false;
        if self.peek() == Some(&Tok::Punct('*')) {
            self.pos += 1;
            star = true;
        } else {
            while let Some(Tok::Var(v)) = self.peek() {
                projection.push(Variable::new(v)?);
                self.pos += 1;
            }
            if projection.is_empty() {
                if self.peek() == Some(&Tok::Punct('(')) {
                    return Err(QueryError::Unsupported("projection expressions".into()));
                }
                return Err(self.error("projected variable or '*'"));
            }
        }
        self.check_unsupported()?;
        if self.peek().is_some_and(|t| t.is_word("WHERE")) {
            self.pos += 1;
        }
        let branches = self.group()?;
        if self.peek().is_some() {
            self.check_unsupported()?;
            return Err(self.error("end of query"));
        }
        if star {
            projection = QueryAlgebra::common_variables(&branches);
        }
        QueryAlgebra::new(projection, branches)
    }

    fn group(&mut self) -> Result<Vec<Bgp>, QueryError> {
        self.expect_punct('{')?;
        if self.peek() == Some(&Tok::Punct('{')) {
            let mut branches = vec![self.inner_group()?];
            while self.peek().is_some_and(|t| t.is_word("UNION")) {
                self.pos += 1;
                branches.push(self.inner_group()?);
            }
            self.check_unsupported()?;
            if self.peek() != Some(&Tok::Punct('}')) {
                return Err(QueryError::Unsupported("graph patterns mixing groups and triples".into()));
            }
            self.pos += 1;
            return Ok(branches);
        }
        let bgp = self.triples_block()?;
        self.expect_punct('}')?;
        Ok(vec![bgp])
    }

    fn inner_group(&mut self) -> Result<Bgp, QueryError> {
        self.expect_punct('{')?;
        if self.peek() == Some(&Tok::Punct('{')) {
            return Err(QueryError::Unsupported("nested groups".into()));
        }
        let bgp = self.triples_block()?;
        self.expect_punct('}')?;
        Ok(bgp)
    }

    fn triples_block(&mut self) -> Result<Bgp, QueryError> {
        let mut bgp = Bgp::new(Vec::new());
        loop {
            self.check_unsupported()?;
            match self.peek() {
                Some(Tok::Punct('}')) | None => break,
                Some(Tok::Punct('{')) => {
                    if bgp.is_empty() {
                        return Err(QueryError::Unsupported("nested groups".into()));
                    }
                    return Err(QueryError::Unsupported("graph patterns mixing groups and triples".into()));
                }
                _ => {}
            }
            self.same_subject(&mut bgp)?;
            match self.peek() {
                Some(Tok::Punct('.')) => self.pos += 1,
                Some(Tok::Punct('}')) => break,
                _ => {
                    self.check_unsupported()?;
                    return Err(self.error("'.' or '}'"));
                }
            }
        }
        if bgp.is_empty() {
            return Err(QueryError::Validation("empty basic graph pattern".into()));
        }
        Ok(bgp)
    }

    fn same_subject(&mut self, bgp: &mut Bgp) -> Result<(), QueryError> {
        let subject = self.term("subject")?;
        loop {
            let predicate = self.verb()?;
            loop {
                let object = self.term("object")?;
                let label = self.label()?;
                let line = self.line();
                let pattern = TriplePattern::new(subject.clone(), predicate.clone(), object)
                    .map_err(|e| match e {
                        QueryError::Validation(m) => QueryError::Validation(format!("line {line}: {m}")),
                        other => other,
                    })?;
                bgp.patterns.push(pattern);
                bgp.labels.push(label);
                if self.peek() == Some(&Tok::Punct(',')) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if self.peek() != Some(&Tok::Punct(';')) {
                return Ok(());
            }
            while self.peek() == Some(&Tok::Punct(';')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(Tok::Punct('.' | '}')) | None) {
                return Ok(());
            }
        }
    }

    fn label(&mut self) -> Result<Option<String>, QueryError> {
        if self.peek() != Some(&Tok::Punct('(')) {
            return Ok(None);
        }
        match (self.toks.get(self.pos + 1), self.toks.get(self.pos + 2)) {
            (Some((Tok::Word(w), _)), Some((Tok::Punct(')'), _))) => {
                let w = w.clone();
                self.pos += 3;
                Ok(Some(w))
            }
            _ => Err(QueryError::Unsupported("RDF collections".into())),
        }
    }

    fn verb(&mut self) -> Result<PatternTerm, QueryError> {
        if matches!(self.peek(), Some(Tok::Word(w)) if w == "a") {
            self.pos += 1;
            return Ok(PatternTerm::Const(Term::iri(RDF_TYPE).expect("valid")));
        }
        if matches!(self.peek(), Some(Tok::Punct('^' | '!' | '('))) {
            return Err(QueryError::Unsupported("property paths".into()));
        }
        let t = self.term("predicate")?;
        if matches!(self.peek(), Some(Tok::Punct('/' | '|' | '*' | '+'))) {
            return Err(QueryError::Unsupported("property paths".into()));
        }
        Ok(t)
    }

    fn resolve(&self, tok: &Tok, line: usize) -> Result<String, QueryError> {
        match tok {
            Tok::Iri(i) => Ok(i.clone()),
            Tok::PName(p, l) => match self.prefixes.get(p) {
                Some(ns) => Ok(format!("{ns}{l}")),
                None => Err(syntax(line, tok.text(), format!("declared prefix '{p}:'"))),
            },
            other => Err(syntax(line, other.text(), "IRI")),
        }
    }

    fn term(&mut self, role: &str) -> Result<PatternTerm, QueryError> {
        self.check_unsupported()?;
        let line = self.line();
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error(role));
        };
        let iri_term = |s: String| {
            Term::iri(s).map_err(|e| syntax(line, tok.text(), format!("valid IRI ({e})")))
        };
        let term = match &tok {
            Tok::Var(v) => PatternTerm::Var(Variable::new(v)?),
            Tok::Iri(_) | Tok::PName(..) => {
                if let Tok::PName(p, _) = &tok {
                    if p == "_" {
                        return Err(QueryError::Unsupported("blank nodes in queries".into()));
                    }
                }
                PatternTerm::Const(iri_term(self.resolve(&tok, line)?)?)
            }
            Tok::Literal { lexical, lang, datatype } => {
                let t = match (lang, datatype) {
                    (Some(lang), _) => Term::plain_literal(format!("{lexical}@{lang}")),
                    (None, Some(dt)) => {
                        let dt = self.resolve(dt, line)?;
                        Term::typed_literal(lexical.as_str(), dt)
                            .map_err(|e| syntax(line, tok.text(), format!("valid datatype ({e})")))?
                    }
                    (None, None) => Term::plain_literal(lexical.as_str()),
                };
                PatternTerm::Const(t)
            }
            Tok::Number(n, dt) => PatternTerm::Const(Term::typed_literal(n.as_str(), *dt).expect("valid")),
            Tok::Word(w) if w == "true" || w == "false" => {
                PatternTerm::Const(Term::typed_literal(w.as_str(), XSD_BOOLEAN).expect("valid"))
            }
            Tok::Punct('[') => return Err(QueryError::Unsupported("blank node property lists".into())),
            Tok::Punct('(') => return Err(QueryError::Unsupported("RDF collections".into())),
            _ => return Err(self.error(role)),
        };
        self.pos += 1;
        Ok(term)
    }
}

/// Parses a bare SPARQL SELECT query into its algebra. `first_line` is the
/// line number of the query text inside the enclosing file.
pub(crate) fn parse_sparql(text: &str, first_line: usize) -> Result<QueryAlgebra, QueryError> {
    let toks = Lexer::new(text, first_line).tokens()?;
    let last_line = toks.last().map(|(_, l)| *l).unwrap_or(first_line);
    let mut p = Parser { toks, pos: 0, last_line, prefixes: HashMap::new() };
    p.query()
}

struct Header<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Header<'a> {
    fn line(&self) -> usize {
        self.src[..self.pos].matches('\n').count() + 1
    }

    fn skip_ws(&mut self) {
        loop {
            let rest = &self.src[self.pos..];
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with('#') {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                return;
            }
        }
    }

    fn next_token(&self) -> String {
        let rest = &self.src[self.pos..];
        let end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len()).min(24);
        if end == 0 {
            "end of input".into()
        } else {
            rest[..end].to_string()
        }
    }

    fn err(&self, expected: &str) -> QueryError {
        syntax(self.line(), self.next_token(), expected)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let ok = rest.len() >= kw.len()
            && rest[..kw.len()].eq_ignore_ascii_case(kw)
            && !rest[kw.len()..].starts_with(|c: char| c.is_alphanumeric() || c == '_');
        if ok {
            self.pos += kw.len();
            Ok(())
        } else {
            Err(self.err(kw))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), QueryError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("'{c}'")))
        }
    }

    fn bracketed_word(&mut self, what: &str) -> Result<String, QueryError> {
        self.punct('[')?;
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest.find(|c: char| c.is_whitespace() || c == ']').unwrap_or(rest.len());
        if end == 0 {
            return Err(self.err(what));
        }
        let word = rest[..end].to_string();
        self.pos += end;
        self.punct(']')?;
        Ok(word)
    }

    fn duration(&mut self, name: &str) -> Result<u64, QueryError> {
        self.keyword(name)?;
        self.punct('[')?;
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        let amount: u64 = rest[..end].parse().map_err(|_| self.err("duration amount"))?;
        self.pos += end;
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(rest.len());
        let unit = rest[..end].to_ascii_lowercase();
        let factor = match unit.as_str() {
            "milliseconds" | "millisecond" => 1,
            "seconds" | "second" => 1_000,
            "minutes" | "minute" => 60_000,
            _ => return Err(self.err("time unit (Milliseconds, Seconds or Minutes)")),
        };
        self.pos += end;
        self.punct(']')?;
        amount
            .checked_mul(factor)
            .ok_or_else(|| QueryError::Validation(format!("{name} duration overflows")))
    }

    /// Returns the text between `[` and its matching `]`, skipping brackets
    /// inside IRIs, strings and comments.
    fn sparql_body(&mut self) -> Result<(usize, &'a str), QueryError> {
        self.punct('[')?;
        let start = self.pos;
        let line = self.line();
        let bytes = self.src.as_bytes();
        let mut depth = 0usize;
        let mut i = start;
        while i < bytes.len() {
            match bytes[i] {
                b'"' | b'\'' => {
                    let q = bytes[i];
                    i += 1;
                    while i < bytes.len() && bytes[i] != q && bytes[i] != b'\n' {
                        if bytes[i] == b'\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                }
                b'<' => {
                    let mut j = i + 1;
                    while j < bytes.len() && !matches!(bytes[j], b'>' | b' ' | b'\n' | b'\t' | b'\r') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j] == b'>' {
                        i = j;
                    }
                }
                b'#' => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                    continue;
                }
                b'[' => depth += 1,
                b']' if depth == 0 => {
                    self.pos = i + 1;
                    return Ok((line, &self.src[start..i]));
                }
                b']' => depth -= 1,
                _ => {}
            }
            i += 1;
        }
        Err(syntax(line, "SPARQL [", "']' closing the SPARQL block"))
    }
}

/// Parses one query file.
pub fn parse_continuous_query(text: &str) -> Result<ContinuousQuerySpec, QueryError> {
    let mut h = Header { src: text, pos: 0 };
    h.keyword("STREAMING")?;
    h.punct('{')?;
    let window = h.duration("WINDOW")?;
    let slide = h.duration("SLIDE")?;
    let batch = h.duration("BATCH")?;
    h.punct('}')?;
    h.keyword("REGISTER")?;
    h.punct('{')?;
    h.keyword("QUERYID")?;
    let id = h.bracketed_word("query id")?;
    h.keyword("SPARQL")?;
    let (line, body) = h.sparql_body()?;
    h.punct('}')?;
    h.skip_ws();
    if h.pos != text.len() {
        return Err(h.err("end of file"));
    }
    super::validate_windowing(window, slide, batch)?;
    let algebra = parse_sparql(body, line)?;
    ContinuousQuerySpec::new(id, window, slide, batch, algebra, body.trim())
}
