//! Continuous query model: triple patterns, union-of-BGP algebra and the
//! windowing header (`STREAMING { WINDOW .. SLIDE .. BATCH .. }`).

mod parser;
mod registry;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::rdf::{Term, Triple};

pub use parser::parse_continuous_query;
pub use registry::{QueryHandle, QueryRegistry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at line {line} near {token:?}: expected {expected}")]
    Syntax { line: usize, token: String, expected: String },
    #[error("invalid query: {0}")]
    Validation(String),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("query id {0:?} is already registered")]
    DuplicateQueryId(String),
}

/// A query variable, stored without its leading `?`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(Arc<str>);

pub(crate) fn valid_variable_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric())
}

impl Variable {
    pub fn new(name: &str) -> Result<Self, QueryError> {
        let name = name.strip_prefix(['?', '$']).unwrap_or(name);
        if !valid_variable_name(name) {
            return Err(QueryError::Validation(format!("invalid variable name {name:?}")));
        }
        Ok(Variable(name.into()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    Var(Variable),
    Const(Term),
}

impl PatternTerm {
    pub fn var(name: &str) -> Self {
        PatternTerm::Var(Variable::new(name).expect("valid variable name"))
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Const(_) => None,
        }
    }

    pub fn is_bound(&self) -> bool {
        matches!(self, PatternTerm::Const(_))
    }
}

impl From<Term> for PatternTerm {
    fn from(t: Term) -> Self {
        PatternTerm::Const(t)
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => v.fmt(f),
            PatternTerm::Const(t) => t.fmt(f),
        }
    }
}

/// Which slot of a pattern a term occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Subject,
    Predicate,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Result<Self, QueryError> {
        if let PatternTerm::Const(t) = &subject {
            if t.is_literal() {
                return Err(QueryError::Validation("literal in subject position".into()));
            }
        }
        if let PatternTerm::Const(t) = &predicate {
            if !t.is_iri() {
                return Err(QueryError::Validation("predicate must be an IRI or variable".into()));
            }
        }
        Ok(TriplePattern { subject, predicate, object })
    }

    pub fn terms(&self) -> [(Position, &PatternTerm); 3] {
        [
            (Position::Subject, &self.subject),
            (Position::Predicate, &self.predicate),
            (Position::Object, &self.object),
        ]
    }

    /// Distinct variables in subject, predicate, object order.
    pub fn variables(&self) -> Vec<Variable> {
        let mut out: Vec<Variable> = Vec::with_capacity(3);
        for (_, t) in self.terms() {
            if let Some(v) = t.as_var() {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn positions_of(&self, var: &Variable) -> Vec<Position> {
        self.terms()
            .into_iter()
            .filter(|(_, t)| t.as_var() == Some(var))
            .map(|(p, _)| p)
            .collect()
    }

    pub fn shared_variables(&self, other: &TriplePattern) -> BTreeSet<Variable> {
        let mine: BTreeSet<Variable> = self.variables().into_iter().collect();
        other.variables().into_iter().filter(|v| mine.contains(v)).collect()
    }

    /// Whether `triple` is matched by this pattern, including repeated
    /// variables binding to equal terms.
    pub fn matches(&self, triple: &Triple) -> bool {
        let terms = triple.terms();
        let slots = [&self.subject, &self.predicate, &self.object];
        for i in 0..3 {
            match slots[i] {
                PatternTerm::Const(c) => {
                    if c != terms[i] {
                        return false;
                    }
                }
                PatternTerm::Var(v) => {
                    for j in 0..i {
                        if slots[j].as_var() == Some(v) && terms[j] != terms[i] {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// A basic graph pattern. Labels are the optional `(tpN)` annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bgp {
    pub patterns: Vec<TriplePattern>,
    pub labels: Vec<Option<String>>,
}

impl Bgp {
    pub fn new(patterns: Vec<TriplePattern>) -> Self {
        let labels = vec![None; patterns.len()];
        Bgp { patterns, labels }
    }

    pub fn variables(&self) -> Vec<Variable> {
        let mut out: Vec<Variable> = Vec::new();
        for p in &self.patterns {
            for v in p.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// Projection over a union of BGP branches (a single branch when there is
/// no UNION).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAlgebra {
    pub projection: Vec<Variable>,
    pub branches: Vec<Bgp>,
}

impl QueryAlgebra {
    pub fn new(projection: Vec<Variable>, branches: Vec<Bgp>) -> Result<Self, QueryError> {
        if branches.is_empty() {
            return Err(QueryError::Validation("query has no graph pattern".into()));
        }
        if branches.iter().any(Bgp::is_empty) {
            return Err(QueryError::Validation("empty basic graph pattern".into()));
        }
        let mut seen = BTreeSet::new();
        for v in &projection {
            if !seen.insert(v) {
                return Err(QueryError::Validation(format!("{v} projected twice")));
            }
            for (i, b) in branches.iter().enumerate() {
                if !b.variables().contains(v) {
                    return Err(QueryError::Validation(format!(
                        "projected variable {v} does not occur in union branch {}",
                        i + 1
                    )));
                }
            }
        }
        if projection.is_empty() {
            return Err(QueryError::Validation("empty projection".into()));
        }
        Ok(QueryAlgebra { projection, branches })
    }

    /// Variables common to every branch, in first-appearance order. Used for
    /// `SELECT *`.
    pub fn common_variables(branches: &[Bgp]) -> Vec<Variable> {
        let Some(first) = branches.first() else { return Vec::new() };
        first
            .variables()
            .into_iter()
            .filter(|v| branches.iter().all(|b| b.variables().contains(v)))
            .collect()
    }

    pub fn pattern_count(&self) -> usize {
        self.branches.iter().map(Bgp::len).sum()
    }
}

/// A registered continuous query: window parameters in milliseconds plus the
/// algebra.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuousQuerySpec {
    pub id: String,
    pub window_ms: u64,
    pub slide_ms: u64,
    pub batch_ms: u64,
    pub algebra: QueryAlgebra,
    pub sparql_text: String,
}

impl ContinuousQuerySpec {
    pub fn new(
        id: impl Into<String>,
        window_ms: u64,
        slide_ms: u64,
        batch_ms: u64,
        algebra: QueryAlgebra,
        sparql_text: impl Into<String>,
    ) -> Result<Self, QueryError> {
        validate_windowing(window_ms, slide_ms, batch_ms)?;
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(QueryError::Validation(format!("invalid query id {id:?}")));
        }
        Ok(ContinuousQuerySpec {
            id,
            window_ms,
            slide_ms,
            batch_ms,
            algebra,
            sparql_text: sparql_text.into(),
        })
    }

    pub fn batches_per_window(&self) -> u64 {
        self.window_ms / self.batch_ms
    }

    pub fn batches_per_slide(&self) -> u64 {
        self.slide_ms / self.batch_ms
    }
}

pub fn validate_windowing(window_ms: u64, slide_ms: u64, batch_ms: u64) -> Result<(), QueryError> {
    if batch_ms == 0 {
        return Err(QueryError::Validation("batch interval must be positive".into()));
    }
    if slide_ms < batch_ms {
        return Err(QueryError::Validation("slide is shorter than the batch interval".into()));
    }
    if window_ms < slide_ms {
        return Err(QueryError::Validation("window is shorter than the slide".into()));
    }
    if !window_ms.is_multiple_of(batch_ms) {
        return Err(QueryError::Validation(format!(
            "window of {window_ms} ms is not a multiple of the {batch_ms} ms batch interval"
        )));
    }
    if !slide_ms.is_multiple_of(batch_ms) {
        return Err(QueryError::Validation(format!(
            "slide of {slide_ms} ms is not a multiple of the {batch_ms} ms batch interval"
        )));
    }
    Ok(())
}
