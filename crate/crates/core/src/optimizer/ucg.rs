use std::collections::{BTreeMap, BTreeSet};

use crate::query::{Position, TriplePattern, Variable};

use super::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Star,
    NonStar,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub pattern: TriplePattern,
    pub weight: f64,
    pub visited: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub endpoints: (usize, usize),
    pub variables: BTreeSet<Variable>,
    pub weight: f64,
    pub kind: EdgeKind,
    pub visited: bool,
}

/// Patterns sharing one variable in the same position.
#[derive(Debug, Clone, PartialEq)]
pub struct StarGroup {
    pub variable: Variable,
    pub position: Position,
    pub members: Vec<usize>,
    pub bounded_object: bool,
    /// Upper bound on the star join output.
    pub upper_bound: f64,
    /// Cap applied to in-star edge weights: the smallest member
    /// cardinality, discounted for bounded-object stars.
    pub weight_cap: f64,
}

impl StarGroup {
    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }
}

/// Undirected join graph over the triple patterns of one BGP.
#[derive(Debug, Clone, PartialEq)]
pub struct Ucg {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub stars: Vec<StarGroup>,
    ranks: Vec<usize>,
}

/// Heuristic selectivity rank of a pattern from its bound positions; lower
/// is more selective.
pub fn static_rank(p: &TriplePattern) -> u8 {
    match (p.subject.is_bound(), p.predicate.is_bound(), p.object.is_bound()) {
        (true, true, true) => 1,
        (true, false, true) => 2,
        (true, true, false) => 3,
        (false, true, true) => 4,
        (false, false, true) => 5,
        (true, false, false) => 6,
        (false, true, false) => 7,
        (false, false, false) => 8,
    }
}

/// Lexicographic rank of each pattern's serialization, index as tie-break.
fn lexicographic_ranks(patterns: &[TriplePattern]) -> Vec<usize> {
    let keys: Vec<String> = patterns.iter().map(|p| p.to_string()).collect();
    let mut order: Vec<usize> = (0..patterns.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; patterns.len()];
    for (r, i) in order.into_iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

pub fn classify_stars(patterns: &[TriplePattern]) -> Vec<StarGroup> {
    let mut groups: BTreeMap<(Position, Variable), Vec<usize>> = BTreeMap::new();
    for (i, p) in patterns.iter().enumerate() {
        for (pos, t) in p.terms() {
            if let Some(v) = t.as_var() {
                let members = groups.entry((pos, v.clone())).or_default();
                if !members.contains(&i) {
                    members.push(i);
                }
            }
        }
    }
    groups
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|((position, variable), members)| {
            let bounded_object = members.iter().any(|&i| patterns[i].object.is_bound());
            StarGroup { variable, position, members, bounded_object, upper_bound: 0.0, weight_cap: 0.0 }
        })
        .collect()
}

pub fn non_star_join_weight(kind: EdgeKind, a: f64, b: f64) -> f64 {
    match kind {
        EdgeKind::Cartesian => a * b,
        _ => a.min(b),
    }
}

/// Weight of an edge inside `group`: the smaller endpoint weight, capped at
/// the group's discounted bound.
pub fn star_join_weight(group: &StarGroup, a: f64, b: f64) -> f64 {
    a.min(b).min(group.weight_cap)
}

/// Star join bound from member cardinalities and the largest number of
/// rows any member has for a single value of the star variable. With
/// key-like data (all degrees 1) this is the smallest member cardinality.
pub fn star_upper_bound(cards: &[f64], max_degrees: &[f64]) -> f64 {
    (0..cards.len())
        .map(|i| {
            let others: f64 = (0..cards.len()).filter(|&j| j != i).map(|j| max_degrees[j]).product();
            cards[i] * others
        })
        .fold(f64::INFINITY, f64::min)
}

impl Ucg {
    pub fn build(patterns: &[TriplePattern]) -> Ucg {
        let n = patterns.len();
        let vertices: Vec<Vertex> =
            patterns.iter().map(|p| Vertex { pattern: p.clone(), weight: 0.0, visited: false }).collect();
        let stars = classify_stars(patterns);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let variables = patterns[a].shared_variables(&patterns[b]);
                if variables.is_empty() {
                    continue;
                }
                let kind = if stars.iter().any(|g| g.contains(a) && g.contains(b)) {
                    EdgeKind::Star
                } else {
                    EdgeKind::NonStar
                };
                edges.push(Edge { endpoints: (a, b), variables, weight: 0.0, kind, visited: false });
            }
        }
        let ranks = lexicographic_ranks(patterns);

        // connect components through their lexicographically first vertices
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while c[r] != r {
                r = c[r];
            }
            c[x] = r;
            r
        }
        for e in &edges {
            let (ra, rb) = (find(&mut comp, e.endpoints.0), find(&mut comp, e.endpoints.1));
            comp[ra] = rb;
        }
        let mut reps: BTreeMap<usize, usize> = BTreeMap::new();
        for v in 0..n {
            let r = find(&mut comp, v);
            let e = reps.entry(r).or_insert(v);
            if ranks[v] < ranks[*e] {
                *e = v;
            }
        }
        let mut heads: Vec<usize> = reps.into_values().collect();
        heads.sort_by_key(|&v| ranks[v]);
        for w in heads.windows(2) {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            edges.push(Edge {
                endpoints: (a, b),
                variables: BTreeSet::new(),
                weight: 0.0,
                kind: EdgeKind::Cartesian,
                visited: false,
            });
        }
        Ucg { vertices, edges, stars, ranks }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&Edge> {
        let key = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.endpoints == key)
    }

    pub fn weight_list(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().map(|e| (e.endpoints.0, e.endpoints.1, e.weight)).collect()
    }

    pub fn reset_visited(&mut self) {
        self.vertices.iter_mut().for_each(|v| v.visited = false);
        self.edges.iter_mut().for_each(|e| e.visited = false);
    }

    pub fn init_weights_static(&mut self, cfg: &OptimizerConfig) {
        for v in &mut self.vertices {
            v.weight = f64::from(static_rank(&v.pattern));
            v.visited = true;
        }
        for g in &mut self.stars {
            g.upper_bound = f64::INFINITY;
            g.weight_cap = f64::INFINITY;
        }
        for e in &mut self.edges {
            let (a, b) = (self.vertices[e.endpoints.0].weight, self.vertices[e.endpoints.1].weight);
            e.weight = match e.kind {
                EdgeKind::Star => a.min(b) * cfg.static_star_factor,
                kind => non_star_join_weight(kind, a, b),
            };
            e.visited = true;
        }
    }

    /// Weights the graph from exact pattern cardinalities. `max_degrees[v]`
    /// maps each variable of pattern `v` to the largest number of matches
    /// sharing one value of it; missing entries count as 1.
    pub fn apply_cardinalities(
        &mut self,
        cards: &[u64],
        max_degrees: &[BTreeMap<Variable, u64>],
        cfg: &OptimizerConfig,
    ) {
        self.reset_visited();
        for (v, &c) in self.vertices.iter_mut().zip(cards) {
            v.weight = c as f64;
            v.visited = true;
        }
        for g in &mut self.stars {
            let members_cards: Vec<f64> = g.members.iter().map(|&m| cards[m] as f64).collect();
            let degrees: Vec<f64> = g
                .members
                .iter()
                .map(|&m| max_degrees.get(m).and_then(|d| d.get(&g.variable)).map_or(1.0, |&d| d as f64))
                .collect();
            g.upper_bound = star_upper_bound(&members_cards, &degrees);
            let min_card = members_cards.iter().copied().fold(f64::INFINITY, f64::min);
            let discount = if g.bounded_object { cfg.bounded_star_factor } else { 1.0 };
            g.weight_cap = min_card * discount;
        }
        while let Some(i) = self.edges.iter().position(|e| !e.visited) {
            let (a, b) = self.edges[i].endpoints;
            let (wa, wb) = (self.vertices[a].weight, self.vertices[b].weight);
            if self.edges[i].kind == EdgeKind::Star {
                // every edge of every star containing this one gets its star weight
                for g in self.stars.iter().filter(|g| g.contains(a) && g.contains(b)) {
                    for e in self.edges.iter_mut().filter(|e| {
                        e.kind == EdgeKind::Star && g.contains(e.endpoints.0) && g.contains(e.endpoints.1)
                    }) {
                        let w = star_join_weight(
                            g,
                            self.vertices[e.endpoints.0].weight,
                            self.vertices[e.endpoints.1].weight,
                        );
                        e.weight = if e.visited { e.weight.min(w) } else { w };
                        e.visited = true;
                    }
                }
            } else {
                let e = &mut self.edges[i];
                e.weight = non_star_join_weight(e.kind, wa, wb);
                e.visited = true;
            }
        }
    }

    pub fn all_visited(&self) -> bool {
        self.vertices.iter().all(|v| v.visited) && self.edges.iter().all(|e| e.visited)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::PatternTerm;
    use crate::rdf::Term;

    fn iri(s: &str) -> PatternTerm {
        PatternTerm::Const(Term::iri(format!("http://e/{s}")).unwrap())
    }

    fn tp(s: PatternTerm, p: PatternTerm, o: PatternTerm) -> TriplePattern {
        TriplePattern::new(s, p, o).unwrap()
    }

    fn v(n: &str) -> PatternTerm {
        PatternTerm::var(n)
    }

    pub(crate) fn q8() -> Vec<TriplePattern> {
        vec![
            tp(v("s"), iri("hasValue"), v("o1")),
            tp(v("s"), iri("hasValue"), v("o2")),
            tp(v("s"), iri("hasValue"), v("o3")),
            tp(v("o1"), iri("type"), iri("flow")),
            tp(v("o2"), iri("type"), iri("temperature")),
            tp(v("o3"), iri("type"), iri("chlorine")),
        ]
    }

    #[test]
    fn q8_structure() {
        let g = Ucg::build(&q8());
        assert_eq!(g.len(), 6);
        let mut pairs: Vec<_> = g.edges.iter().map(|e| (e.endpoints, e.kind)).collect();
        pairs.sort_by_key(|p| p.0);
        assert_eq!(
            pairs,
            vec![
                ((0, 1), EdgeKind::Star),
                ((0, 2), EdgeKind::Star),
                ((0, 3), EdgeKind::NonStar),
                ((1, 2), EdgeKind::Star),
                ((1, 4), EdgeKind::NonStar),
                ((2, 5), EdgeKind::NonStar),
            ]
        );
        assert_eq!(g.stars.len(), 1);
        assert_eq!(g.stars[0].members, vec![0, 1, 2]);
        assert!(!g.stars[0].bounded_object);
    }

    #[test]
    fn single_and_disconnected() {
        let g = Ucg::build(&[tp(v("s"), iri("p"), v("o"))]);
        assert_eq!((g.len(), g.edges.len()), (1, 0));
        let g = Ucg::build(&[tp(v("a"), iri("p"), v("b")), tp(v("c"), iri("q"), v("d"))]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::Cartesian);
    }

    #[test]
    fn chain_has_no_star() {
        let g = Ucg::build(&[
            tp(v("a"), iri("p"), v("b")),
            tp(v("b"), iri("p"), v("c")),
            tp(v("c"), iri("p"), v("d")),
        ]);
        assert!(g.stars.is_empty());
    }

    #[test]
    fn bounded_star() {
        let pats = [tp(v("s"), iri("p1"), PatternTerm::Const(Term::plain_literal("5"))), tp(v("s"), iri("p2"), v("x"))];
        let g = Ucg::build(&pats);
        assert!(g.stars[0].bounded_object);
    }

    #[test]
    fn static_ranks() {
        assert!(static_rank(&tp(v("s"), iri("p"), iri("o"))) < static_rank(&tp(v("s"), iri("p"), v("o"))));
        assert_eq!(static_rank(&tp(v("s"), v("p"), v("o"))), 8);
        let mut g = Ucg::build(&q8());
        g.init_weights_static(&OptimizerConfig::default());
        for i in 0..3 {
            assert!(g.vertices[i + 3].weight < g.vertices[i].weight);
        }
        assert_eq!(g.edge_between(0, 1).unwrap().weight, 3.5);
        assert_eq!(g.edge_between(0, 3).unwrap().weight, 4.0);
    }

    #[test]
    fn star_weight_formula() {
        let cfg = OptimizerConfig::default();
        let pats = [tp(v("s"), iri("a"), v("x")), tp(v("s"), iri("b"), v("y")), tp(v("s"), iri("c"), v("z"))];
        let mut g = Ucg::build(&pats);
        g.apply_cardinalities(&[5, 7, 2], &[], &cfg);
        assert_eq!(g.stars[0].upper_bound, 2.0);
        assert!(g.edges.iter().all(|e| e.weight <= 2.0));
        assert_eq!(g.edge_between(0, 1).unwrap().weight, 2.0);
        assert!(g.all_visited());

        g.apply_cardinalities(&[5, 0, 2], &[], &cfg);
        assert!(g.edges.iter().all(|e| e.weight == 0.0));

        let bounded = [tp(v("s"), iri("a"), iri("k")), tp(v("s"), iri("b"), v("y"))];
        let mut g = Ucg::build(&bounded);
        g.apply_cardinalities(&[10, 10], &[], &cfg);
        assert_eq!(g.stars[0].weight_cap, 1.0);
        assert_eq!(g.edges[0].weight, 1.0);
    }

    #[test]
    fn non_star_weights() {
        assert_eq!(non_star_join_weight(EdgeKind::NonStar, 5.0, 9.0), 5.0);
        assert_eq!(non_star_join_weight(EdgeKind::NonStar, 0.0, 7.0), 0.0);
        assert_eq!(non_star_join_weight(EdgeKind::Cartesian, 3.0, 4.0), 12.0);
    }

    #[test]
    fn degree_aware_bound() {
        // two rows per key in each member: bound must allow 2*2 per key
        assert_eq!(star_upper_bound(&[4.0, 4.0], &[2.0, 2.0]), 8.0);
        assert_eq!(star_upper_bound(&[5.0, 7.0, 2.0], &[1.0, 1.0, 1.0]), 2.0);
    }
}
