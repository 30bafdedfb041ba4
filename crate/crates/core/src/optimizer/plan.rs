use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::query::{TriplePattern, Variable};

use super::cover::PathCover;
use super::ucg::{EdgeKind, Ucg};

#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    Scan { branch: usize, vertex: usize, pattern: TriplePattern, est: f64 },
    Join { left: Box<PlanNode>, right: Box<PlanNode>, variables: Vec<Variable>, est: f64 },
    Union(Vec<PlanNode>),
}

pub(crate) fn fmt_weight(w: f64) -> String {
    if w.is_finite() && w.fract() == 0.0 {
        format!("{w:.0}")
    } else if w.is_finite() {
        let s = format!("{w:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        "inf".into()
    }
}

impl PlanNode {
    pub fn scan(ucg: &Ucg, branch: usize, vertex: usize) -> PlanNode {
        PlanNode::Scan {
            branch,
            vertex,
            pattern: ucg.vertices[vertex].pattern.clone(),
            est: ucg.vertices[vertex].weight,
        }
    }

    /// Joins two subtrees of the same branch, estimating the output from
    /// the lightest UCG edge crossing them, or the product for cartesian
    /// joins.
    pub fn join(left: PlanNode, right: PlanNode, ucg: &Ucg) -> PlanNode {
        let lv = left.variables();
        let variables: Vec<Variable> = right.variables().intersection(&lv).cloned().collect();
        let est = join_estimate(&left, &right, ucg, variables.is_empty());
        PlanNode::Join { left: Box::new(left), right: Box::new(right), variables, est }
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        match self {
            PlanNode::Scan { pattern, .. } => pattern.variables().into_iter().collect(),
            PlanNode::Join { left, right, .. } => {
                let mut v = left.variables();
                v.extend(right.variables());
                v
            }
            PlanNode::Union(children) => children.iter().flat_map(|c| c.variables()).collect(),
        }
    }

    pub fn est(&self) -> f64 {
        match self {
            PlanNode::Scan { est, .. } | PlanNode::Join { est, .. } => *est,
            PlanNode::Union(children) => children.iter().map(PlanNode::est).sum(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            PlanNode::Scan { .. } => 0,
            PlanNode::Join { left, right, .. } => 1 + left.height().max(right.height()),
            PlanNode::Union(children) => 1 + children.iter().map(PlanNode::height).max().unwrap_or(0),
        }
    }

    pub fn leaves(&self) -> Vec<&TriplePattern> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let PlanNode::Scan { pattern, .. } = n {
                out.push(pattern);
            }
        });
        out
    }

    fn vertices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let PlanNode::Scan { vertex, .. } = n {
                out.push(*vertex);
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a PlanNode)) {
        f(self);
        match self {
            PlanNode::Scan { .. } => {}
            PlanNode::Join { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            PlanNode::Union(children) => children.iter().for_each(|c| c.visit(f)),
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    fn reestimate(&mut self, ucgs: &[Ucg]) {
        match self {
            PlanNode::Scan { branch, vertex, est, .. } => *est = ucgs[*branch].vertices[*vertex].weight,
            PlanNode::Join { left, right, variables, est } => {
                left.reestimate(ucgs);
                right.reestimate(ucgs);
                let branch = left.branch();
                *est = join_estimate(left, right, &ucgs[branch], variables.is_empty());
            }
            PlanNode::Union(children) => children.iter_mut().for_each(|c| c.reestimate(ucgs)),
        }
    }

    fn branch(&self) -> usize {
        match self {
            PlanNode::Scan { branch, .. } => *branch,
            PlanNode::Join { left, .. } => left.branch(),
            PlanNode::Union(_) => 0,
        }
    }

    fn render(&self, depth: usize, weights: bool, out: &mut String) {
        let pad = "  ".repeat(depth);
        match self {
            PlanNode::Scan { pattern, est, .. } => {
                let _ = write!(out, "{pad}scan {pattern}");
                if weights {
                    let _ = write!(out, " card={}", fmt_weight(*est));
                }
            }
            PlanNode::Join { left, right, variables, est } => {
                let vars: Vec<String> = variables.iter().map(|v| v.to_string()).collect();
                let _ = write!(out, "{pad}join[{}]", vars.join(" "));
                if weights {
                    let _ = write!(out, " est={}", fmt_weight(*est));
                }
                out.push('\n');
                left.render(depth + 1, weights, out);
                out.push('\n');
                right.render(depth + 1, weights, out);
            }
            PlanNode::Union(children) => {
                let _ = write!(out, "{pad}union");
                for c in children {
                    out.push('\n');
                    c.render(depth + 1, weights, out);
                }
            }
        }
    }
}

fn join_estimate(left: &PlanNode, right: &PlanNode, ucg: &Ucg, cartesian: bool) -> f64 {
    if cartesian {
        return left.est() * right.est();
    }
    let (lv, rv) = (left.vertices(), right.vertices());
    ucg.edges
        .iter()
        .filter(|e| e.kind != EdgeKind::Cartesian)
        .filter(|e| {
            let (a, b) = e.endpoints;
            (lv.contains(&a) && rv.contains(&b)) || (lv.contains(&b) && rv.contains(&a))
        })
        .map(|e| e.weight)
        .fold(f64::INFINITY, f64::min)
}

/// A join tree with projection and a shape-derived identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalPlan {
    pub projection: Vec<Variable>,
    pub root: PlanNode,
    id: u64,
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl LogicalPlan {
    pub fn new(projection: Vec<Variable>, root: PlanNode) -> Self {
        let mut plan = LogicalPlan { projection, root, id: 0 };
        plan.id = fnv1a(&plan.shape());
        plan
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn id_hex(&self) -> String {
        format!("{:016x}", self.id)
    }

    fn header(&self) -> String {
        let vars: Vec<String> = self.projection.iter().map(|v| v.to_string()).collect();
        format!("project[{}]\n", vars.join(" "))
    }

    /// Rendering without weights; identical shapes share a plan id.
    pub fn shape(&self) -> String {
        let mut s = self.header();
        self.root.render(1, false, &mut s);
        s
    }

    pub fn explain(&self) -> String {
        let mut s = self.header();
        self.root.render(1, true, &mut s);
        s.push('\n');
        s
    }

    /// Sum of join estimates.
    pub fn estimated_cost(&self) -> f64 {
        let mut total = 0.0;
        self.root.visit(&mut |n| {
            if let PlanNode::Join { est, .. } = n {
                total += est;
            }
        });
        total
    }

    /// The same shape with estimates recomputed under other weights.
    pub fn reestimated(&self, ucgs: &[Ucg]) -> LogicalPlan {
        let mut root = self.root.clone();
        root.reestimate(ucgs);
        LogicalPlan { projection: self.projection.clone(), root, id: self.id }
    }

    pub fn height(&self) -> usize {
        self.root.height()
    }

    pub fn leaves(&self) -> Vec<&TriplePattern> {
        self.root.leaves()
    }
}

fn fold(seq: &[usize], ucg: &Ucg, branch: usize) -> PlanNode {
    if seq.len() == 1 {
        return PlanNode::scan(ucg, branch, seq[0]);
    }
    let mid = seq.len() / 2;
    let left = fold(&seq[..mid], ucg, branch);
    let right = fold(&seq[mid..], ucg, branch);
    PlanNode::join(left, right, ucg)
}

/// Folds each sequence into a balanced tree, then joins the trees,
/// preferring at each step the first one sharing a variable with what has
/// been joined so far.
pub fn branch_tree(ucg: &Ucg, branch: usize, sequences: &[Vec<usize>]) -> PlanNode {
    let mut trees: Vec<PlanNode> = sequences.iter().filter(|s| !s.is_empty()).map(|s| fold(s, ucg, branch)).collect();
    let mut acc = trees.remove(0);
    while !trees.is_empty() {
        let vars = acc.variables();
        let pick = trees.iter().position(|t| !t.variables().is_disjoint(&vars)).unwrap_or(0);
        let next = trees.remove(pick);
        acc = PlanNode::join(acc, next, ucg);
    }
    acc
}

pub fn plan_from_sequences(ucgs: &[Ucg], sequences: &[Vec<Vec<usize>>], projection: &[Variable]) -> LogicalPlan {
    let mut branches: Vec<PlanNode> =
        ucgs.iter().zip(sequences).enumerate().map(|(b, (u, s))| branch_tree(u, b, s)).collect();
    let root = if branches.len() == 1 { branches.remove(0) } else { PlanNode::Union(branches) };
    LogicalPlan::new(projection.to_vec(), root)
}

pub fn build_plan(ucgs: &[Ucg], covers: &[PathCover], projection: &[Variable]) -> LogicalPlan {
    let seqs: Vec<Vec<Vec<usize>>> = covers.iter().map(|c| c.sequences.clone()).collect();
    plan_from_sequences(ucgs, &seqs, projection)
}
