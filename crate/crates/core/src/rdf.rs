//! RDF terms, triples, timed stream events and a line-oriented N-Triples
//! reader/writer.
//!
//! Only the flat N-Triples subset is handled: one statement per line, no
//! prefixes. Language-tagged literals are folded into plain literals whose
//! lexical form carries the tag (`"chat"@fr` becomes the plain literal
//! `chat@fr`).
//!
//! Replay files prefix every statement with `<event-time-ms> <topic> `.

use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use thiserror::Error;

use crate::par::{self, Parallelism};

pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RdfError {
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("malformed triple at column {position}: {reason}")]
    MalformedTriple { position: usize, reason: String },
    #[error("malformed replay line: {0}")]
    MalformedReplay(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<RdfError>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// An RDF term. Strings are reference counted so cloning is cheap.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(Arc<str>),
    TypedLiteral { lexical: Arc<str>, datatype: Arc<str> },
    PlainLiteral(Arc<str>),
    BlankNode(Arc<str>),
}

fn forbidden_in_iri(c: char) -> bool {
    c.is_whitespace()
        || c.is_control()
        || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\')
}

fn validate_iri(iri: &str) -> Result<(), RdfError> {
    if iri.is_empty() {
        return Err(RdfError::InvalidTerm("empty IRI".into()));
    }
    if let Some(c) = iri.chars().find(|&c| forbidden_in_iri(c)) {
        return Err(RdfError::InvalidTerm(format!("character {c:?} not allowed in IRI")));
    }
    Ok(())
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn validate_blank_label(label: &str) -> Result<(), RdfError> {
    let ok = !label.is_empty()
        && label.chars().all(is_label_char)
        && !label.starts_with(['.', '-'])
        && !label.ends_with('.');
    if ok {
        Ok(())
    } else {
        Err(RdfError::InvalidTerm(format!("invalid blank node label {label:?}")))
    }
}

impl Term {
    pub fn iri(iri: impl Into<Arc<str>>) -> Result<Term, RdfError> {
        let iri = iri.into();
        validate_iri(&iri)?;
        Ok(Term::Iri(iri))
    }

    pub fn typed_literal(
        lexical: impl Into<Arc<str>>,
        datatype: impl Into<Arc<str>>,
    ) -> Result<Term, RdfError> {
        let datatype = datatype.into();
        validate_iri(&datatype)?;
        Ok(Term::TypedLiteral { lexical: lexical.into(), datatype })
    }

    pub fn plain_literal(lexical: impl Into<Arc<str>>) -> Term {
        Term::PlainLiteral(lexical.into())
    }

    pub fn blank_node(label: impl Into<Arc<str>>) -> Result<Term, RdfError> {
        let label = label.into();
        validate_blank_label(&label)?;
        Ok(Term::BlankNode(label))
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::TypedLiteral { .. } | Term::PlainLiteral(_))
    }

    pub fn lexical(&self) -> &str {
        match self {
            Term::Iri(s) | Term::PlainLiteral(s) | Term::BlankNode(s) => s,
            Term::TypedLiteral { lexical, .. } => lexical,
        }
    }

    /// Appends the N-Triples form of this term.
    pub fn write_ntriples(&self, out: &mut String) {
        match self {
            Term::Iri(iri) => {
                out.push('<');
                out.push_str(iri);
                out.push('>');
            }
            Term::BlankNode(label) => {
                out.push_str("_:");
                out.push_str(label);
            }
            Term::PlainLiteral(lex) => write_quoted(lex, out),
            Term::TypedLiteral { lexical, datatype } => {
                write_quoted(lexical, out);
                out.push_str("^^<");
                out.push_str(datatype);
                out.push('>');
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_ntriples(&mut s);
        f.write_str(&s)
    }
}

fn write_quoted(lexical: &str, out: &mut String) {
    out.push('"');
    for c in lexical.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// An RDF statement. Subjects are IRIs or blank nodes, predicates are IRIs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    subject: Term,
    predicate: Term,
    object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Triple, RdfError> {
        if subject.is_literal() {
            return Err(RdfError::InvalidTriple("subject cannot be a literal".into()));
        }
        if !predicate.is_iri() {
            return Err(RdfError::InvalidTriple("predicate must be an IRI".into()));
        }
        Ok(Triple { subject, predicate, object })
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }

    /// Positions in subject, predicate, object order.
    pub fn terms(&self) -> [&Term; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_triple(self))
    }
}

/// A triple stamped with its event time and source topic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TimedTriple {
    pub triple: Triple,
    pub event_time: u64,
    topic: Arc<str>,
}

impl TimedTriple {
    pub fn new(triple: Triple, event_time: u64, topic: impl Into<Arc<str>>) -> Result<Self, RdfError> {
        let topic = topic.into();
        if topic.is_empty() || topic.chars().any(char::is_whitespace) {
            return Err(RdfError::InvalidTriple(format!("invalid topic {topic:?}")));
        }
        Ok(TimedTriple { triple, event_time, topic })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn topic_arc(&self) -> &Arc<str> {
        &self.topic
    }
}

pub fn serialize_triple(t: &Triple) -> String {
    let mut out = String::with_capacity(96);
    t.subject.write_ntriples(&mut out);
    out.push(' ');
    t.predicate.write_ntriples(&mut out);
    out.push(' ');
    t.object.write_ntriples(&mut out);
    out.push_str(" .");
    out
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn err(&self, reason: impl Into<String>) -> RdfError {
        RdfError::MalformedTriple { position: self.pos, reason: reason.into() }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn read_hex(&mut self, digits: usize) -> Result<char, RdfError> {
        let mut v: u32 = 0;
        for _ in 0..digits {
            let c = self.bump().ok_or_else(|| self.err("truncated unicode escape"))?;
            let d = c.to_digit(16).ok_or_else(|| self.err("invalid hex digit in escape"))?;
            v = v * 16 + d;
        }
        char::from_u32(v).ok_or_else(|| self.err("escape is not a unicode scalar value"))
    }

    fn iri(&mut self) -> Result<Arc<str>, RdfError> {
        debug_assert_eq!(self.peek(), Some('<'));
        let start = self.pos;
        self.pos += 1;
        let mut value = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(RdfError::MalformedTriple {
                        position: start,
                        reason: "unterminated IRI".into(),
                    })
                }
                Some('>') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('u') => self.read_hex(4)?,
                        Some('U') => self.read_hex(8)?,
                        _ => return Err(self.err("invalid escape in IRI")),
                    };
                    value.push(c);
                }
                Some(c) => value.push(c),
            }
        }
        validate_iri(&value).map_err(|e| RdfError::MalformedTriple {
            position: start,
            reason: e.to_string(),
        })?;
        Ok(value.into())
    }

    fn blank(&mut self) -> Result<Term, RdfError> {
        let start = self.pos;
        if !self.src[self.pos..].starts_with("_:") {
            return Err(self.err("expected blank node"));
        }
        self.pos += 2;
        let label_start = self.pos;
        while matches!(self.peek(), Some(c) if is_label_char(c)) {
            self.pos += 1;
        }
        // a trailing '.' terminates the statement, not the label
        while self.pos > label_start && self.src[..self.pos].ends_with('.') {
            self.pos -= 1;
        }
        let label = &self.src[label_start..self.pos];
        Term::blank_node(label).map_err(|e| RdfError::MalformedTriple {
            position: start,
            reason: e.to_string(),
        })
    }

    fn literal(&mut self) -> Result<Term, RdfError> {
        let start = self.pos;
        self.pos += 1;
        let mut lex = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(RdfError::MalformedTriple {
                        position: start,
                        reason: "unterminated literal".into(),
                    })
                }
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.read_hex(4)?,
                        Some('U') => self.read_hex(8)?,
                        _ => return Err(self.err("invalid escape in literal")),
                    };
                    lex.push(c);
                }
                Some(c) => lex.push(c),
            }
        }
        if self.src[self.pos..].starts_with("^^") {
            self.pos += 2;
            if self.peek() != Some('<') {
                return Err(self.err("expected datatype IRI after ^^"));
            }
            let dt = self.iri()?;
            return Ok(Term::TypedLiteral { lexical: lex.into(), datatype: dt });
        }
        if self.peek() == Some('@') {
            self.pos += 1;
            let tag_start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '-') {
                self.pos += 1;
            }
            let tag = &self.src[tag_start..self.pos];
            if tag.is_empty() || !tag.starts_with(|c: char| c.is_ascii_alphabetic()) {
                return Err(self.err("invalid language tag"));
            }
            lex.push('@');
            lex.push_str(tag);
        }
        Ok(Term::PlainLiteral(lex.into()))
    }
}

/// Parses one physical line. `Ok(None)` marks blank and comment lines.
pub fn parse_ntriples_line(line: &str) -> Result<Option<Triple>, RdfError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut cur = Cursor { src: line, pos: 0 };
    cur.skip_ws();
    if cur.at_end() || cur.peek() == Some('#') {
        return Ok(None);
    }

    let subject = match cur.peek() {
        Some('<') => Term::Iri(cur.iri()?),
        Some('_') => cur.blank()?,
        Some('"') => return Err(cur.err("subject cannot be a literal")),
        _ => return Err(cur.err("missing subject")),
    };
    if !cur.skip_ws() && !cur.at_end() {
        return Err(cur.err("expected whitespace after subject"));
    }
    let predicate = match cur.peek() {
        Some('<') => Term::Iri(cur.iri()?),
        None | Some('.') => return Err(cur.err("missing predicate")),
        _ => return Err(cur.err("predicate must be an IRI")),
    };
    if !cur.skip_ws() && !cur.at_end() {
        return Err(cur.err("expected whitespace after predicate"));
    }
    let object = match cur.peek() {
        Some('<') => Term::Iri(cur.iri()?),
        Some('_') => cur.blank()?,
        Some('"') => cur.literal()?,
        None | Some('.') => return Err(cur.err("missing object")),
        _ => return Err(cur.err("invalid object term")),
    };
    cur.skip_ws();
    if cur.bump() != Some('.') {
        return Err(cur.err("missing final '.'"));
    }
    cur.skip_ws();
    if !cur.at_end() && cur.peek() != Some('#') {
        return Err(cur.err("unexpected content after '.'"));
    }
    Triple::new(subject, predicate, object)
        .map(Some)
        .map_err(|e| RdfError::MalformedTriple { position: 0, reason: e.to_string() })
}

/// Parses many lines, possibly in parallel. Output order matches input.
pub fn parse_ntriples_lines(
    lines: &[&str],
    mode: Parallelism,
) -> Vec<Result<Option<Triple>, RdfError>> {
    par::map_chunks(mode, lines, 4096, |chunk| {
        chunk.iter().map(|l| parse_ntriples_line(l)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Reads every triple from an N-Triples document.
pub fn read_ntriples<R: BufRead>(reader: R) -> Result<Vec<Triple>, RdfError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RdfError::Io(e.to_string()))?;
        match parse_ntriples_line(&line) {
            Ok(Some(t)) => out.push(t),
            Ok(None) => {}
            Err(e) => return Err(RdfError::AtLine { line: i + 1, source: Box::new(e) }),
        }
    }
    Ok(out)
}

/// Parses `<event-time-ms> <topic> <statement>`.
pub fn parse_replay_line(line: &str) -> Result<Option<TimedTriple>, RdfError> {
    let trimmed = line.trim_end_matches(['\n', '\r']);
    if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
        return Ok(None);
    }
    let (time, rest) = trimmed
        .split_once(' ')
        .ok_or_else(|| RdfError::MalformedReplay("missing topic".into()))?;
    let event_time: u64 = time
        .parse()
        .map_err(|_| RdfError::MalformedReplay(format!("invalid event time {time:?}")))?;
    let (topic, statement) = rest
        .split_once(' ')
        .ok_or_else(|| RdfError::MalformedReplay("missing statement".into()))?;
    let triple = parse_ntriples_line(statement)?
        .ok_or_else(|| RdfError::MalformedReplay("missing statement".into()))?;
    TimedTriple::new(triple, event_time, topic).map(Some)
}

pub fn format_replay_line(t: &TimedTriple) -> String {
    format!("{} {} {}", t.event_time, t.topic, serialize_triple(&t.triple))
}

/// Reads a whole replay file, in file order.
pub fn read_replay<R: BufRead>(reader: R) -> Result<Vec<TimedTriple>, RdfError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RdfError::Io(e.to_string()))?;
        match parse_replay_line(&line) {
            Ok(Some(t)) => out.push(t),
            Ok(None) => {}
            Err(e) => return Err(RdfError::AtLine { line: i + 1, source: Box::new(e) }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iri(s: &str) -> Term {
        Term::iri(s).unwrap()
    }

    #[test]
    fn typed_literal_line() {
        let t = parse_ntriples_line(
            r#"<http://s> <http://p> "5"^^<http://www.w3.org/2001/XMLSchema#integer> ."#,
        )
        .unwrap()
        .unwrap();
        assert_eq!(t.subject(), &iri("http://s"));
        assert_eq!(t.predicate(), &iri("http://p"));
        assert_eq!(t.object(), &Term::typed_literal("5", XSD_INTEGER).unwrap());
    }

    #[test]
    fn comments_and_blank_lines_skip() {
        assert_eq!(parse_ntriples_line("# comment").unwrap(), None);
        assert_eq!(parse_ntriples_line("   ").unwrap(), None);
        assert_eq!(parse_ntriples_line("").unwrap(), None);
    }

    #[test]
    fn missing_object_is_reported() {
        let err = parse_ntriples_line("<http://s> <http://p> .").unwrap_err();
        match err {
            RdfError::MalformedTriple { reason, .. } => assert_eq!(reason, "missing object"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_variants() {
        for bad in [
            "<http://s <http://p> <http://o> .",
            "<http://s> <http://p> \"abc .",
            "<http://s> <http://p> <http://o>",
            "\"lit\" <http://p> <http://o> .",
            "<http://s> _:p <http://o> .",
            "<http://s> <http://p> <http://o> . trailing",
            "<> <http://p> <http://o> .",
        ] {
            assert!(
                matches!(parse_ntriples_line(bad), Err(RdfError::MalformedTriple { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn serialize_simple() {
        let t = Triple::new(iri("s"), iri("p"), iri("o")).unwrap();
        assert_eq!(serialize_triple(&t), "<s> <p> <o> .");
    }

    #[test]
    fn serialize_escapes_quotes() {
        let t = Triple::new(
            iri("http://s"),
            iri("http://p"),
            Term::typed_literal("say \"hi\"", XSD_DOUBLE).unwrap(),
        )
        .unwrap();
        let line = serialize_triple(&t);
        assert!(line.contains(r#""say \"hi\"""#), "{line}");
        assert_eq!(parse_ntriples_line(&line).unwrap().unwrap(), t);
    }

    #[test]
    fn language_tag_folds_into_plain_literal() {
        let t = parse_ntriples_line(r#"_:b1 <http://p> "chat"@fr ."#).unwrap().unwrap();
        assert_eq!(t.object(), &Term::plain_literal("chat@fr"));
        assert_eq!(t.subject(), &Term::blank_node("b1").unwrap());
    }

    #[test]
    fn blank_node_followed_directly_by_dot() {
        let t = parse_ntriples_line("<http://s> <http://p> _:x1.").unwrap().unwrap();
        assert_eq!(t.object(), &Term::blank_node("x1").unwrap());
    }

    #[test]
    fn triple_invariants() {
        assert!(Triple::new(Term::plain_literal("x"), iri("p"), iri("o")).is_err());
        assert!(Triple::new(iri("s"), Term::blank_node("b").unwrap(), iri("o")).is_err());
        assert!(Term::iri("has space").is_err());
        assert!(Term::blank_node("").is_err());
    }

    #[test]
    fn replay_line_roundtrip() {
        let line = "1500 flow <http://s> <http://p> \"1.5\"^^<http://www.w3.org/2001/XMLSchema#double> .";
        let t = parse_replay_line(line).unwrap().unwrap();
        assert_eq!(t.event_time, 1500);
        assert_eq!(t.topic(), "flow");
        assert_eq!(format_replay_line(&t), line);
        assert!(parse_replay_line("abc flow <s> <p> <o> .").is_err());
        assert!(parse_replay_line("12 flow").is_err());
    }

    #[test]
    fn batch_parse_matches_single() {
        let lines = ["<a> <b> <c> .", "# x", "<a> <b> .", "_:q <b> \"v\" ."];
        let seq = parse_ntriples_lines(&lines, Parallelism::Sequential);
        let par = parse_ntriples_lines(&lines, Parallelism::Parallel);
        assert_eq!(seq, par);
        assert!(seq[0].as_ref().unwrap().is_some());
        assert!(seq[1].as_ref().unwrap().is_none());
        assert!(seq[2].is_err());
    }

    fn arb_iri() -> impl Strategy<Value = Term> {
        "[a-z]{1,6}:[A-Za-z0-9/#._~-]{1,12}".prop_map(|s| Term::iri(s).unwrap())
    }

    fn arb_blank() -> impl Strategy<Value = Term> {
        "[A-Za-z0-9_][A-Za-z0-9_.-]{0,6}[A-Za-z0-9_]"
            .prop_map(|s| Term::blank_node(s).unwrap())
    }

    fn arb_object() -> impl Strategy<Value = Term> {
        prop_oneof![
            arb_iri(),
            arb_blank(),
            any::<String>().prop_map(Term::plain_literal),
            (any::<String>(), "[a-z]{1,5}:[a-z0-9#]{1,8}")
                .prop_map(|(l, d)| Term::typed_literal(l, d).unwrap()),
        ]
    }

    fn arb_triple() -> impl Strategy<Value = Triple> {
        (prop_oneof![arb_iri(), arb_blank()], arb_iri(), arb_object())
            .prop_map(|(s, p, o)| Triple::new(s, p, o).unwrap())
    }

    proptest! {
        #[test]
        fn roundtrip(t in arb_triple()) {
            let line = serialize_triple(&t);
            prop_assert_eq!(parse_ntriples_line(&line).unwrap(), Some(t));
        }

        #[test]
        fn parser_is_total(s in "\\PC{0,80}") {
            let first_line = s.lines().next().unwrap_or("");
            let _ = parse_ntriples_line(first_line);
        }

        #[test]
        fn parser_is_total_on_near_misses(s in "[<>\"_:^@ .#a-z\\\\]{0,40}") {
            let _ = parse_ntriples_line(&s);
        }
    }
}
