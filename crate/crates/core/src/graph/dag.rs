use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-edge modifications used by the structure sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeMove {
    Add,
    Remove,
    Reverse,
}

/// A directed acyclic graph on `p` nodes.
///
/// Stored as the adjacency matrix `E` with `E[j][l] = 1` iff `l -> j`, so
/// row `j` lists the parents of `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dag {
    p: usize,
    adj: Vec<bool>,
}

impl Dag {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            adj: vec![false; p * p],
        }
    }

    /// Validates a 0/1 matrix (rows = children) and wraps it.
    pub fn from_adjacency(adjacency: &[Vec<u8>]) -> Result<Self> {
        if !is_acyclic(adjacency)? {
            return Err(Error::MalformedGraph("adjacency matrix contains a cycle".into()));
        }
        let p = adjacency.len();
        let mut adj = vec![false; p * p];
        for (j, row) in adjacency.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                adj[j * p + l] = v == 1;
            }
        }
        Ok(Self { p, adj })
    }

    /// Builds a DAG from `(parent, child)` pairs.
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut m = vec![vec![0u8; p]; p];
        for &(from, to) in edges {
            if from >= p || to >= p {
                return Err(Error::MalformedGraph(format!(
                    "edge {from} -> {to} out of range for {p} nodes"
                )));
            }
            m[to][from] = 1;
        }
        Self::from_adjacency(&m)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `E[j][l]`, true iff `l -> j`.
    #[inline]
    pub fn entry(&self, j: usize, l: usize) -> bool {
        self.adj[j * self.p + l]
    }

    #[inline]
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.entry(to, from)
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.p).filter(|&l| self.entry(j, l)).collect()
    }

    pub fn children(&self, l: usize) -> Vec<usize> {
        (0..self.p).filter(|&j| self.entry(j, l)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    /// All edges as `(parent, child)`, ordered by child then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.p {
            for l in 0..self.p {
                if self.entry(j, l) {
                    out.push((l, j));
                }
            }
        }
        out
    }

    pub fn to_adjacency(&self) -> Vec<Vec<u8>> {
        (0..self.p)
            .map(|j| (0..self.p).map(|l| self.entry(j, l) as u8).collect())
            .collect()
    }

    /// True iff a directed path `from ⇝ to` exists (length ≥ 0).
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.p];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for v in 0..self.p {
                if self.entry(v, u) && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }

    /// Topological order, breaking ties by smallest node index.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_order_flat(self.p, &self.adj).expect("Dag invariant: acyclic")
    }

    /// Applies a single-edge move on `l -> j`.
    ///
    /// `Reverse` turns an existing `l -> j` into `j -> l`. Returns
    /// [`Error::CycleViolation`] (without touching `self`) when the result
    /// would be cyclic, and [`Error::MalformedGraph`] for requests that do
    /// not make sense (self-loops, removing a missing edge, ...).
    pub fn edge_delta(&self, j: usize, l: usize, op: EdgeMove) -> Result<Dag> {
        if j == l {
            return Err(Error::MalformedGraph(format!("self-loop requested on node {j}")));
        }
        if j >= self.p || l >= self.p {
            return Err(Error::MalformedGraph(format!(
                "node index out of range for {} nodes",
                self.p
            )));
        }
        let mut next = self.clone();
        match op {
            EdgeMove::Add => {
                if self.entry(j, l) {
                    return Err(Error::MalformedGraph(format!("edge {l} -> {j} already present")));
                }
                if self.reaches(j, l) {
                    return Err(Error::CycleViolation);
                }
                next.adj[j * self.p + l] = true;
            }
            EdgeMove::Remove => {
                if !self.entry(j, l) {
                    return Err(Error::MalformedGraph(format!("edge {l} -> {j} not present")));
                }
                next.adj[j * self.p + l] = false;
            }
            EdgeMove::Reverse => {
                if !self.entry(j, l) {
                    return Err(Error::MalformedGraph(format!("edge {l} -> {j} not present")));
                }
                next.adj[j * self.p + l] = false;
                if next.reaches(l, j) {
                    return Err(Error::CycleViolation);
                }
                next.adj[l * self.p + j] = true;
            }
        }
        Ok(next)
    }

    /// Removes `l -> j` if present; removal can never create a cycle.
    pub fn without_edge(&self, j: usize, l: usize) -> Dag {
        let mut next = self.clone();
        next.adj[j * self.p + l] = false;
        next
    }

    /// Permutes node labels: node `v` of `self` becomes node `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Dag {
        let mut out = Dag::empty(self.p);
        for (from, to) in self.edges() {
            out.adj[perm[to] * self.p + perm[from]] = true;
        }
        out
    }
}

/// Checks a square 0/1 adjacency matrix (rows = children) for cycles.
pub fn is_acyclic(adjacency: &[Vec<u8>]) -> Result<bool> {
    let p = adjacency.len();
    let mut flat = vec![false; p * p];
    for (j, row) in adjacency.iter().enumerate() {
        if row.len() != p {
            return Err(Error::MalformedGraph(format!(
                "row {j} has {} entries, expected {p}",
                row.len()
            )));
        }
        for (l, &v) in row.iter().enumerate() {
            match v {
                0 => {}
                1 => flat[j * p + l] = true,
                other => {
                    return Err(Error::MalformedGraph(format!(
                        "entry ({j}, {l}) is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        if row[j] != 0 {
            return Err(Error::MalformedGraph(format!("self-loop on node {j}")));
        }
    }
    Ok(topological_order_flat(p, &flat).is_some())
}

/// Kahn's algorithm with a min-heap so ties resolve to the smallest index.
fn topological_order_flat(p: usize, adj: &[bool]) -> Option<Vec<usize>> {
    let mut indegree: Vec<usize> = (0..p)
        .map(|j| (0..p).filter(|&l| adj[j * p + l]).count())
        .collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..p).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(p);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for v in 0..p {
            if adj[v * p + u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
    }
    (order.len() == p).then_some(order)
}

/// Erdős–Rényi DAG: a uniformly random node ordering, then every forward
/// pair becomes an edge independently with probability `prob`.
pub fn random_er_dag<R: Rng + ?Sized>(p: usize, prob: f64, rng: &mut R) -> Result<Dag> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::InvalidConfiguration(format!(
            "edge probability {prob} outside [0, 1]"
        )));
    }
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    let mut dag = Dag::empty(p);
    for a in 0..p {
        for b in a + 1..p {
            if rng.random_bool(prob) {
                let (from, to) = (perm[a], perm[b]);
                dag.adj[to * p + from] = true;
            }
        }
    }
    Ok(dag)
}

/// Finds one directed cycle in a (possibly cyclic) edge set, returned as
/// `(parent, child)` edges.
pub fn find_cycle(p: usize, adj: &[bool]) -> Option<Vec<(usize, usize)>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; p];
    let mut parent = vec![usize::MAX; p];
    for start in 0..p {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next == p {
                color[u] = 2;
                stack.pop();
                continue;
            }
            let v = *next;
            *next += 1;
            if !adj[v * p + u] {
                continue;
            }
            match color[v] {
                0 => {
                    color[v] = 1;
                    parent[v] = u;
                    stack.push((v, 0));
                }
                1 => {
                    let mut cycle = vec![(u, v)];
                    let mut w = u;
                    while w != v {
                        let pw = parent[w];
                        cycle.push((pw, w));
                        w = pw;
                    }
                    return Some(cycle);
                }
                _ => {}
            }
        }
    }
    None
}

impl Dag {
    /// Builds a DAG from a possibly cyclic edge set by repeatedly dropping
    /// the lowest-weight edge on a remaining cycle. Returns the removed edges
    /// as `(parent, child)`.
    pub fn repair_cycles(p: usize, adj: Vec<bool>, weight: impl Fn(usize, usize) -> f64) -> (Dag, Vec<(usize, usize)>) {
        let mut adj = adj;
        for v in 0..p {
            adj[v * p + v] = false;
        }
        let mut removed = Vec::new();
        while let Some(cycle) = find_cycle(p, &adj) {
            let &(from, to) = cycle
                .iter()
                .min_by(|a, b| {
                    weight(a.0, a.1)
                        .partial_cmp(&weight(b.0, b.1))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(b))
                })
                .expect("cycle has at least one edge");
            adj[to * p + from] = false;
            removed.push((from, to));
        }
        (Dag { p, adj }, removed)
    }
}
