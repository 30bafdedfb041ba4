#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsp_core::query::{Bgp, PatternTerm, QueryAlgebra, TriplePattern, Variable};
use rsp_core::rdf::{Term, Triple};

pub const ENTITIES: usize = 12;
pub const PREDICATES: usize = 3;
/// Oracle evaluation stops past this many partial bindings; such instances
/// are regenerated.
pub const ORACLE_LIMIT: usize = 40_000;

pub fn entity(i: usize) -> Term {
    Term::iri(format!("http://t.example/e{i}")).unwrap()
}

pub fn predicate(i: usize) -> Term {
    Term::iri(format!("http://t.example/p{i}")).unwrap()
}

pub fn literal(i: usize) -> Term {
    Term::plain_literal(format!("l{i}"))
}

/// One randomized query/window pair.
#[derive(Debug, Clone)]
pub struct Instance {
    pub algebra: QueryAlgebra,
    pub data: Vec<Triple>,
    /// A second window over the same vocabulary, used to plan backward.
    pub previous: Vec<Triple>,
    /// Oracle result multiset over the projection.
    pub expected: BTreeMap<Vec<Term>, usize>,
}

impl Instance {
    pub fn data_refs(&self) -> Vec<&Triple> {
        self.data.iter().collect()
    }

    pub fn previous_refs(&self) -> Vec<&Triple> {
        self.previous.iter().collect()
    }
}

pub fn random_window(rng: &mut ChaCha8Rng, max: usize) -> Vec<Triple> {
    let n = rng.gen_range(1..=max);
    (0..n)
        .map(|_| {
            let s = entity(rng.gen_range(0..ENTITIES));
            let p = predicate(rng.gen_range(0..PREDICATES));
            let o = if rng.gen_bool(0.2) { literal(rng.gen_range(0..4)) } else { entity(rng.gen_range(0..ENTITIES)) };
            Triple::new(s, p, o).unwrap()
        })
        .collect()
}

fn random_pattern(rng: &mut ChaCha8Rng, vars: usize) -> TriplePattern {
    let var = |rng: &mut ChaCha8Rng| PatternTerm::var(&format!("v{}", rng.gen_range(0..vars)));
    let s = if rng.gen_bool(0.15) { PatternTerm::Const(entity(rng.gen_range(0..ENTITIES))) } else { var(rng) };
    let p = if rng.gen_bool(0.85) { PatternTerm::Const(predicate(rng.gen_range(0..PREDICATES))) } else { var(rng) };
    let o = if rng.gen_bool(0.2) { PatternTerm::Const(entity(rng.gen_range(0..ENTITIES))) } else { var(rng) };
    TriplePattern::new(s, p, o).unwrap()
}

fn random_bgp(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Bgp {
    let n = rng.gen_range(min..=max);
    let vars = rng.gen_range(2..=n.max(2) + 1);
    Bgp::new((0..n).map(|_| random_pattern(rng, vars)).collect())
}

/// Instances with 2 to 6 patterns in total, a two-branch UNION with
/// probability 1/4, and windows of at most `max_triples`.
pub fn random_instances(seed: u64, count: usize, max_triples: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let branches = if rng.gen_bool(0.25) {
            vec![random_bgp(&mut rng, 1, 3), random_bgp(&mut rng, 1, 3)]
        } else {
            vec![random_bgp(&mut rng, 2, 6)]
        };
        let common = QueryAlgebra::common_variables(&branches);
        if common.is_empty() {
            continue;
        }
        let projection: Vec<Variable> =
            common.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect::<Vec<_>>();
        let projection = if projection.is_empty() { common[..1].to_vec() } else { projection };
        let Ok(algebra) = QueryAlgebra::new(projection, branches) else { continue };
        let data = random_window(&mut rng, max_triples);
        let previous = random_window(&mut rng, max_triples);
        if let Some(expected) = oracle(&algebra, &data) {
            out.push(Instance { algebra, data, previous, expected });
        }
    }
    out
}

fn unify(tp: &TriplePattern, t: &Triple, binding: &BTreeMap<Variable, Term>) -> Option<BTreeMap<Variable, Term>> {
    let slots = [&tp.subject, &tp.predicate, &tp.object];
    let terms = [t.subject(), t.predicate(), t.object()];
    let mut fresh: Vec<(&Variable, &Term)> = Vec::new();
    for (slot, term) in slots.into_iter().zip(terms) {
        match slot {
            PatternTerm::Const(c) if c != term => return None,
            PatternTerm::Const(_) => {}
            PatternTerm::Var(v) => {
                let prev = binding.get(v).or_else(|| fresh.iter().find(|(f, _)| *f == v).map(|(_, t)| *t));
                match prev {
                    Some(p) if p != term => return None,
                    Some(_) => {}
                    None => fresh.push((v, term)),
                }
            }
        }
    }
    let mut b = binding.clone();
    for (v, term) in fresh {
        b.insert(v.clone(), term.clone());
    }
    Some(b)
}

/// All solutions of a BGP by backtracking over the window, or `None` when
/// the search exceeds `ORACLE_LIMIT`.
pub fn bgp_solutions(patterns: &[TriplePattern], data: &[Triple]) -> Option<Vec<BTreeMap<Variable, Term>>> {
    let mut partial = vec![BTreeMap::new()];
    for tp in patterns {
        let mut next = Vec::new();
        for b in &partial {
            for t in data {
                if let Some(nb) = unify(tp, t, b) {
                    next.push(nb);
                }
            }
            if next.len() > ORACLE_LIMIT {
                return None;
            }
        }
        partial = next;
    }
    Some(partial)
}

/// Expected result multiset: per-branch solutions projected and unioned.
pub fn oracle(algebra: &QueryAlgebra, data: &[Triple]) -> Option<BTreeMap<Vec<Term>, usize>> {
    let mut out = BTreeMap::new();
    for branch in &algebra.branches {
        for sol in bgp_solutions(&branch.patterns, data)? {
            let row = algebra.projection.iter().map(|v| sol[v].clone()).collect();
            *out.entry(row).or_insert(0) += 1;
        }
    }
    Some(out)
}

/// Number of window triples a pattern matches, counted directly.
pub fn scan_count(tp: &TriplePattern, data: &[Triple]) -> u64 {
    data.iter().filter(|t| unify(tp, t, &BTreeMap::new()).is_some()).count() as u64
}
