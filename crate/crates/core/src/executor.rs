//! Window assembly and plan evaluation over binding tables.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::optimizer::{LogicalPlan, PlanNode};
use crate::par::{self, Parallelism};
use crate::query::{PatternTerm, TriplePattern, Variable};
use crate::rdf::{Term, TimedTriple, Triple};

const SCAN_CHUNK: usize = 16 * 1024;
const PROBE_CHUNK: usize = 8 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("window evaluation cancelled by deadline")]
    CancelledByDeadline,
    #[error("event time {time} outside batch interval [{start}, {end})")]
    EventOutsideBatch { time: u64, start: u64, end: u64 },
    #[error("window {window} has {found} batches, expected {expected}")]
    BadTiling { window: u64, found: usize, expected: usize },
}

/// Triples whose event time falls in `[start_ms, end_ms)`, sealed.
#[derive(Debug, Clone)]
pub struct MicroBatch {
    pub index: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    triples: Arc<[TimedTriple]>,
}

impl MicroBatch {
    pub fn seal(index: u64, start_ms: u64, end_ms: u64, triples: Vec<TimedTriple>) -> Result<Self, ExecError> {
        if let Some(t) = triples.iter().find(|t| t.event_time < start_ms || t.event_time >= end_ms) {
            return Err(ExecError::EventOutsideBatch { time: t.event_time, start: start_ms, end: end_ms });
        }
        Ok(MicroBatch { index, start_ms, end_ms, triples: triples.into() })
    }

    pub fn triples(&self) -> &[TimedTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Window `index` spanning whole batches; overlapping windows share
/// batches by reference.
#[derive(Debug, Clone)]
pub struct WindowInstance {
    pub index: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub batches: Vec<Arc<MicroBatch>>,
}

impl WindowInstance {
    pub fn new(
        index: u64,
        start_ms: u64,
        end_ms: u64,
        batch_ms: u64,
        batches: Vec<Arc<MicroBatch>>,
    ) -> Result<Self, ExecError> {
        let expected = ((end_ms - start_ms) / batch_ms) as usize;
        let tiled = batches.len() == expected
            && batches.iter().enumerate().all(|(i, b)| {
                b.start_ms == start_ms + i as u64 * batch_ms && b.end_ms == b.start_ms + batch_ms
            });
        if !tiled {
            return Err(ExecError::BadTiling { window: index, found: batches.len(), expected });
        }
        Ok(WindowInstance { index, start_ms, end_ms, batches })
    }

    pub fn input_triples(&self) -> usize {
        self.batches.iter().map(|b| b.len()).sum()
    }
}

/// Multiset union of the window's batches.
pub fn union_window(w: &WindowInstance) -> Vec<&Triple> {
    let mut out = Vec::with_capacity(w.input_triples());
    for b in &w.batches {
        out.extend(b.triples().iter().map(|t| &t.triple));
    }
    out
}

/// Rows of variable bindings under a fixed schema, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BindingTable {
    schema: Vec<Variable>,
    data: Vec<Term>,
    rows: usize,
}

impl BindingTable {
    pub fn new(schema: Vec<Variable>) -> Self {
        BindingTable { schema, data: Vec::new(), rows: 0 }
    }

    pub fn schema(&self) -> &[Variable] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn push_row(&mut self, row: impl IntoIterator<Item = Term>) {
        let before = self.data.len();
        self.data.extend(row);
        assert_eq!(self.data.len() - before, self.schema.len(), "row arity must match schema");
        self.rows += 1;
    }

    pub fn row(&self, i: usize) -> &[Term] {
        let a = self.schema.len();
        &self.data[i * a..(i + 1) * a]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Term]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, v: &Variable) -> Option<usize> {
        self.schema.iter().position(|s| s == v)
    }

    fn append(&mut self, other: BindingTable) {
        debug_assert_eq!(self.schema, other.schema);
        self.data.extend(other.data);
        self.rows += other.rows;
    }

    /// Keeps the listed columns in the given order. Variables absent from
    /// the schema are an error of the caller.
    pub fn project(&self, vars: &[Variable]) -> BindingTable {
        let cols: Vec<usize> =
            vars.iter().map(|v| self.column(v).expect("projected variable bound by plan")).collect();
        let mut out = BindingTable::new(vars.to_vec());
        out.data.reserve(self.rows * cols.len());
        for r in self.rows() {
            out.data.extend(cols.iter().map(|&c| r[c].clone()));
        }
        out.rows = self.rows;
        out
    }

    /// Row multiset for order-insensitive comparison.
    pub fn multiset(&self) -> BTreeMap<Vec<Term>, usize> {
        let mut m = BTreeMap::new();
        for r in self.rows() {
            *m.entry(r.to_vec()).or_insert(0) += 1;
        }
        m
    }

    /// Largest number of rows sharing one value of each variable.
    pub fn max_degrees(&self) -> BTreeMap<Variable, u64> {
        let mut out = BTreeMap::new();
        for (c, v) in self.schema.iter().enumerate() {
            let mut counts: HashMap<&Term, u64> = HashMap::new();
            for r in self.rows() {
                *counts.entry(&r[c]).or_insert(0) += 1;
            }
            out.insert(v.clone(), counts.values().copied().max().unwrap_or(0));
        }
        out
    }

    /// Tab-separated lines of N-Triples terms in schema order.
    pub fn format_rows(&self) -> String {
        let mut s = String::new();
        for r in self.rows() {
            for (i, t) in r.iter().enumerate() {
                if i > 0 {
                    s.push('\t');
                }
                t.write_ntriples(&mut s);
            }
            s.push('\n');
        }
        s
    }
}

fn scan_chunk(chunk: &[&Triple], tp: &TriplePattern, schema: &[Variable]) -> BindingTable {
    let mut t = BindingTable::new(schema.to_vec());
    let slots = [&tp.subject, &tp.predicate, &tp.object];
    let cols: Vec<usize> = schema
        .iter()
        .map(|v| slots.iter().position(|s| s.as_var() == Some(v)).expect("schema from pattern"))
        .collect();
    for tr in chunk {
        if tp.matches(tr) {
            let terms = tr.terms();
            t.push_row(cols.iter().map(|&c| terms[c].clone()));
        }
    }
    t
}

/// One row per matching triple; schema is the pattern's variables in
/// subject, predicate, object order.
pub fn scan_pattern(data: &[&Triple], tp: &TriplePattern, mode: Parallelism) -> BindingTable {
    let schema = tp.variables();
    let parts = par::map_chunks(mode, data, SCAN_CHUNK, |c| scan_chunk(c, tp, &schema));
    let mut out = BindingTable::new(schema);
    for p in parts {
        out.append(p);
    }
    out
}

/// Natural join on shared variables (cartesian product when none), bag
/// semantics. Output schema is the left schema followed by the right-only
/// variables.
pub fn hash_join(left: &BindingTable, right: &BindingTable, mode: Parallelism) -> BindingTable {
    let shared: Vec<(usize, usize)> = left
        .schema
        .iter()
        .enumerate()
        .filter_map(|(i, v)| right.column(v).map(|j| (i, j)))
        .collect();
    let extra: Vec<usize> = (0..right.schema.len()).filter(|j| !shared.iter().any(|s| s.1 == *j)).collect();
    let mut schema = left.schema.clone();
    schema.extend(extra.iter().map(|&j| right.schema[j].clone()));

    let mut index: HashMap<Vec<&Term>, Vec<usize>> = HashMap::new();
    for j in 0..right.rows {
        let r = right.row(j);
        index.entry(shared.iter().map(|s| &r[s.1]).collect()).or_default().push(j);
    }
    let left_rows: Vec<usize> = (0..left.rows).collect();
    let parts = par::map_chunks(mode, &left_rows, PROBE_CHUNK, |chunk| {
        let mut out = BindingTable::new(schema.clone());
        let mut key: Vec<&Term> = Vec::with_capacity(shared.len());
        for &i in chunk {
            let l = left.row(i);
            key.clear();
            key.extend(shared.iter().map(|s| &l[s.0]));
            if let Some(matches) = index.get(&key) {
                for &j in matches {
                    let r = right.row(j);
                    out.data.extend(l.iter().cloned());
                    out.data.extend(extra.iter().map(|&c| r[c].clone()));
                    out.rows += 1;
                }
            }
        }
        out
    });
    let mut out = BindingTable::new(schema);
    for p in parts {
        out.append(p);
    }
    out
}

/// Scan results of the current window, reused between statistics
/// collection and plan leaves. Dropped at window end.
#[derive(Debug, Default)]
pub struct ScanCache {
    scans: HashMap<TriplePattern, Arc<BindingTable>>,
    scanned_tuples: u64,
}

impl ScanCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scans every pattern not yet cached, in parallel across patterns.
    pub fn ensure(&mut self, data: &[&Triple], patterns: &[&TriplePattern], mode: Parallelism) {
        let mut missing: Vec<&TriplePattern> =
            patterns.iter().copied().filter(|p| !self.scans.contains_key(*p)).collect();
        missing.sort();
        missing.dedup();
        let tables = par::map(mode, &missing, |p| scan_pattern(data, p, mode));
        self.scanned_tuples += (data.len() * missing.len()) as u64;
        for (p, t) in missing.into_iter().zip(tables) {
            self.scans.insert(p.clone(), Arc::new(t));
        }
    }

    pub fn get(&self, tp: &TriplePattern) -> Option<&Arc<BindingTable>> {
        self.scans.get(tp)
    }

    /// Triples read by scans so far.
    pub fn scanned_tuples(&self) -> u64 {
        self.scanned_tuples
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub counting: bool,
    pub parallelism: Parallelism,
    pub cancel: Option<Arc<AtomicBool>>,
}

/// Output size of one plan node; `node` numbers nodes in pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCount {
    pub node: usize,
    pub height: usize,
    pub kind: &'static str,
    pub rows: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub scanned_tuples: u64,
    /// Rows produced by all plan nodes, scans included.
    pub produced_tuples: u64,
    /// Rows produced by joins below each branch root.
    pub intermediate_tuples: u64,
    pub counted_nodes: u64,
}

#[derive(Debug, Clone)]
pub struct ExecOutcome {
    pub result: BindingTable,
    pub trace: Option<Vec<NodeCount>>,
    pub stats: ExecStats,
}

struct EvalCtx<'a> {
    cache: &'a ScanCache,
    opts: &'a ExecOptions,
    counts: Mutex<Vec<NodeCount>>,
}

impl EvalCtx<'_> {
    fn check(&self) -> Result<(), ExecError> {
        match &self.opts.cancel {
            Some(c) if c.load(Ordering::Relaxed) => Err(ExecError::CancelledByDeadline),
            _ => Ok(()),
        }
    }

    fn record(&self, node: usize, n: &PlanNode, rows: usize, branch_root: bool) {
        let kind = match n {
            PlanNode::Scan { .. } => "scan",
            PlanNode::Join { .. } if branch_root => "root",
            PlanNode::Join { .. } => "join",
            PlanNode::Union(_) => "union",
        };
        self.counts.lock().unwrap().push(NodeCount { node, height: n.height(), kind, rows: rows as u64 });
    }

    fn eval(&self, n: &PlanNode, id: usize, branch_root: bool) -> Result<Arc<BindingTable>, ExecError> {
        self.check()?;
        let out = match n {
            PlanNode::Scan { pattern, .. } => self.cache.get(pattern).expect("leaf scanned before evaluation").clone(),
            PlanNode::Join { left, right, .. } => {
                let right_id = id + 1 + left.node_count();
                let (l, r) = par::join(
                    self.opts.parallelism,
                    || self.eval(left, id + 1, false),
                    || self.eval(right, right_id, false),
                );
                Arc::new(hash_join(&*l?, &*r?, self.opts.parallelism))
            }
            PlanNode::Union(_) => unreachable!("union handled at the root"),
        };
        self.record(id, n, out.len(), branch_root);
        Ok(out)
    }
}

/// Evaluates `plan` bottom-up over `data`. Leaf scans come from `cache`
/// (scanning what is missing). Independent subtrees may run concurrently.
pub fn execute_plan(
    plan: &LogicalPlan,
    data: &[&Triple],
    cache: &mut ScanCache,
    opts: &ExecOptions,
) -> Result<ExecOutcome, ExecError> {
    let before = cache.scanned_tuples();
    cache.ensure(data, &plan.leaves(), opts.parallelism);
    let ctx = EvalCtx { cache, opts, counts: Mutex::new(Vec::new()) };

    let (branches, first_id): (Vec<&PlanNode>, usize) = match &plan.root {
        PlanNode::Union(children) => (children.iter().collect(), 1),
        root => (vec![root], 0),
    };
    let mut result = BindingTable::new(plan.projection.clone());
    let mut id = first_id;
    for b in branches {
        let t = ctx.eval(b, id, true)?;
        result.append(t.project(&plan.projection));
        id += b.node_count();
    }
    ctx.check()?;
    if first_id == 1 {
        ctx.record(0, &plan.root, result.len(), true);
    }

    let mut counts = ctx.counts.into_inner().unwrap();
    counts.sort_by_key(|c| c.node);
    let stats = ExecStats {
        scanned_tuples: cache.scanned_tuples() - before,
        produced_tuples: counts.iter().map(|c| c.rows).sum(),
        intermediate_tuples: counts.iter().filter(|c| c.kind == "join").map(|c| c.rows).sum(),
        counted_nodes: if opts.counting { counts.len() as u64 } else { 0 },
    };
    Ok(ExecOutcome { result, trace: opts.counting.then_some(counts), stats })
}

/// Reference evaluation by nested loops over the window, one pattern at a
/// time. Used to cross-check plans.
pub fn nested_loop_eval(patterns: &[TriplePattern], data: &[&Triple]) -> Vec<BTreeMap<Variable, Term>> {
    let mut partial: Vec<BTreeMap<Variable, Term>> = vec![BTreeMap::new()];
    for tp in patterns {
        let mut next = Vec::new();
        for binding in &partial {
            'triples: for tr in data {
                let mut b = binding.clone();
                for (slot, term) in [&tp.subject, &tp.predicate, &tp.object].into_iter().zip(tr.terms()) {
                    match slot {
                        PatternTerm::Const(c) => {
                            if c != term {
                                continue 'triples;
                            }
                        }
                        PatternTerm::Var(v) => match b.get(v) {
                            Some(bound) if bound != term => continue 'triples,
                            Some(_) => {}
                            None => {
                                b.insert(v.clone(), term.clone());
                            }
                        },
                    }
                }
                next.push(b);
            }
        }
        partial = next;
    }
    partial
}
