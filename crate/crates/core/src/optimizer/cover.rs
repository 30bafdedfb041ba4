use std::collections::VecDeque;

use super::OptimizerError;

/// All-pairs shortest paths with successor matrix for path recovery.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    n: usize,
    dist: Vec<f64>,
    next: Vec<Option<usize>>,
}

impl ShortestPaths {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    /// Vertices strictly between `a` and `b` on the recorded shortest path.
    pub fn intermediates(&self, a: usize, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = a;
        while let Some(nx) = self.next[cur * self.n + b] {
            if nx == b {
                break;
            }
            out.push(nx);
            cur = nx;
        }
        out
    }
}

pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> ShortestPaths {
    let mut dist = vec![f64::INFINITY; n * n];
    let mut next = vec![None; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
        next[i * n + i] = Some(i);
    }
    for &(a, b, w) in edges {
        if w < dist[a * n + b] {
            dist[a * n + b] = w;
            dist[b * n + a] = w;
            next[a * n + b] = Some(b);
            next[b * n + a] = Some(a);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let cand = dik + dist[k * n + j];
                if cand < dist[i * n + j] {
                    dist[i * n + j] = cand;
                    next[i * n + j] = next[i * n + k];
                }
            }
        }
    }
    ShortestPaths { n, dist, next }
}

/// Vertex sequences covering the graph once each. Consecutive vertices of
/// a sequence are adjacent; `total_weight` sums shortest-path distances
/// along the flattened order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCover {
    pub sequences: Vec<Vec<usize>>,
    pub total_weight: f64,
}

impl PathCover {
    pub fn order(&self) -> Vec<usize> {
        self.sequences.iter().flatten().copied().collect()
    }
}

/// Greedy extension from one starting edge.
fn extend_from(n: usize, sp: &ShortestPaths, ranks: &[usize], start: (usize, usize)) -> Vec<usize> {
    let mut path = VecDeque::from([start.0, start.1]);
    let mut visited = vec![false; n];
    visited[start.0] = true;
    visited[start.1] = true;
    let mut remaining = n - 2;
    while remaining > 0 {
        let (front, back) = (*path.front().unwrap(), *path.back().unwrap());
        let mut best: Option<(f64, usize, bool)> = None;
        for x in (0..n).filter(|&x| !visited[x]) {
            for (at_back, end) in [(true, back), (false, front)] {
                let d = sp.distance(end, x);
                let better = match best {
                    None => true,
                    Some((bd, bx, bb)) => {
                        d < bd || (d == bd && (ranks[x] < ranks[bx] || (x == bx && at_back && !bb)))
                    }
                };
                if better {
                    best = Some((d, x, at_back));
                }
            }
        }
        let (_, x, at_back) = best.expect("unvisited vertex exists");
        let end = if at_back { back } else { front };
        let mids = sp.intermediates(end, x);
        let mut added: Vec<usize> = if mids.iter().all(|&m| !visited[m]) { mids } else { Vec::new() };
        added.push(x);
        for v in added {
            visited[v] = true;
            remaining -= 1;
            if at_back {
                path.push_back(v);
            } else {
                path.push_front(v);
            }
        }
    }
    path.into()
}

/// Cover search on an explicit weighted graph. `ranks` orders vertices for
/// tie-breaking.
pub fn path_cover(n: usize, edges: &[(usize, usize, f64)], ranks: &[usize]) -> Result<PathCover, OptimizerError> {
    if n == 0 {
        return Ok(PathCover { sequences: Vec::new(), total_weight: 0.0 });
    }
    let sp = floyd_warshall(n, edges);
    if (0..n).any(|v| sp.distance(0, v) == f64::INFINITY) {
        return Err(OptimizerError::DisconnectedGraph);
    }
    if n == 1 {
        return Ok(PathCover { sequences: vec![vec![0]], total_weight: 0.0 });
    }
    let mut starts: Vec<(f64, usize, usize, usize, usize)> = edges
        .iter()
        .map(|&(a, b, w)| {
            let (lo, hi) = if ranks[a] <= ranks[b] { (a, b) } else { (b, a) };
            (w, ranks[lo], ranks[hi], lo, hi)
        })
        .collect();
    starts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut best: Option<(f64, Vec<usize>)> = None;
    for &(_, _, _, lo, hi) in &starts {
        let mut order = extend_from(n, &sp, ranks, (lo, hi));
        if ranks[order[0]] > ranks[order[n - 1]] {
            order.reverse();
        }
        let total: f64 = order.windows(2).map(|w| sp.distance(w[0], w[1])).sum();
        if best.as_ref().is_none_or(|(bt, _)| total < *bt) {
            best = Some((total, order));
        }
    }
    let (total_weight, order) = best.expect("connected graph with n > 1 has an edge");

    let adjacent = |a: usize, b: usize| edges.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a));
    let mut sequences = vec![vec![order[0]]];
    for w in order.windows(2) {
        if adjacent(w[0], w[1]) {
            sequences.last_mut().unwrap().push(w[1]);
        } else {
            sequences.push(vec![w[1]]);
        }
    }
    Ok(PathCover { sequences, total_weight })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
        let sp = floyd_warshall(n, edges);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        fn rec(k: usize, perm: &mut Vec<usize>, sp: &ShortestPaths, best: &mut f64) {
            if k == perm.len() {
                let t: f64 = perm.windows(2).map(|w| sp.distance(w[0], w[1])).sum();
                *best = best.min(t);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                rec(k + 1, perm, sp, best);
                perm.swap(k, i);
            }
        }
        rec(0, &mut perm, &sp, &mut best);
        best
    }

    #[test]
    fn path_graph() {
        let c = path_cover(3, &[(0, 1, 1.0), (1, 2, 2.0)], &[0, 1, 2]).unwrap();
        assert_eq!(c.sequences, vec![vec![0, 1, 2]]);
        assert_eq!(c.total_weight, 3.0);
    }

    #[test]
    fn triangle() {
        let e = [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 10.0)];
        let c = path_cover(3, &e, &[0, 1, 2]).unwrap();
        assert_eq!(c.sequences, vec![vec![0, 1, 2]]);
        assert_eq!(c.total_weight, brute_force(3, &e));
    }

    #[test]
    fn star_k13_matches_exhaustive() {
        // center 0, leaves 1,2,3
        let e = [(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0)];
        let c = path_cover(4, &e, &[0, 1, 2, 3]).unwrap();
        assert_eq!(c.total_weight, brute_force(4, &e));
        let mut all = c.order();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        for s in &c.sequences {
            for w in s.windows(2) {
                assert!(e.iter().any(|&(a, b, _)| (a, b) == (w[0], w[1]) || (a, b) == (w[1], w[0])));
            }
        }
    }

    #[test]
    fn shortest_path_recovery() {
        let sp = floyd_warshall(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 10.0)]);
        assert_eq!(sp.distance(0, 3), 3.0);
        assert_eq!(sp.intermediates(0, 3), vec![1, 2]);
        assert!(sp.intermediates(0, 1).is_empty());
    }

    #[test]
    fn disconnected_is_error() {
        assert_eq!(path_cover(3, &[(0, 1, 1.0)], &[0, 1, 2]), Err(OptimizerError::DisconnectedGraph));
    }
}
