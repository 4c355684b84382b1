//! Landmark tree: the spanning-tree constraint on the landmark graph and its
//! minimum-cost update.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Disjoint-set forest with union by rank and path halving.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merge the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Spanning tree over `k` landmark vertices. Edges are stored as `(a, b)`
/// with `a < b`, sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeGraph {
    k: usize,
    edges: Vec<(usize, usize)>,
}

impl TreeGraph {
    /// Checks the tree invariants: `k − 1` edges, no self loops, acyclic
    /// (hence connected).
    pub fn new(k: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("tree needs at least one vertex"));
        }
        if edges.len() != k - 1 {
            return Err(Error::invalid(format!(
                "a tree on {k} vertices has {} edges, got {}",
                k - 1,
                edges.len()
            )));
        }
        let mut uf = UnionFind::new(k);
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= k || b >= k {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    len: k,
                });
            }
            if a == b {
                return Err(Error::invalid(format!("self loop at {a}")));
            }
            if !uf.union(a, b) {
                return Err(Error::invalid(format!("edge ({a}, {b}) closes a cycle")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        Ok(TreeGraph { k, edges: norm })
    }

    pub fn empty() -> Self {
        TreeGraph {
            k: 1,
            edges: Vec::new(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Symmetric 0/1 adjacency `G`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.k, self.k);
        for &(a, b) in &self.edges {
            g[(a, b)] = 1.0;
            g[(b, a)] = 1.0;
        }
        g
    }

    /// Graph Laplacian `diag(G·1) − G`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.k, self.k);
        for &(a, b) in &self.edges {
            p[(a, a)] += 1.0;
            p[(b, b)] += 1.0;
            p[(a, b)] -= 1.0;
            p[(b, a)] -= 1.0;
        }
        p
    }

    /// `Σ_{edges} ‖c_a − c_b‖²`, summed in edge order. The prior term in the
    /// objective is `β` times this (the double sum counts each edge twice).
    pub fn total_cost(&self, c: &DMatrix<f64>) -> f64 {
        self.edges.iter().map(|&(a, b)| edge_cost(c, a, b)).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("K {}\n", self.k);
        for (a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    pub fn from_text(text: &str, origin: &std::path::Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, h) = lines
            .next()
            .ok_or_else(|| perr(1, "empty tree file".into()))?;
        let k = match h.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["K", k] => k
                .parse::<usize>()
                .map_err(|e| perr(hl, format!("bad K: {e}")))?,
            _ => return Err(perr(hl, format!("expected `K k`, found {h:?}"))),
        };
        let mut edges = Vec::new();
        for (ln, l) in lines {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 2 {
                return Err(perr(ln, format!("expected `k1 k2`, found {l:?}")));
            }
            let a = t[0]
                .parse()
                .map_err(|e| perr(ln, format!("bad vertex: {e}")))?;
            let b = t[1]
                .parse()
                .map_err(|e| perr(ln, format!("bad vertex: {e}")))?;
            edges.push((a, b));
        }
        TreeGraph::new(k, edges)
    }
}

pub(crate) fn edge_cost(c: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    c.column(a)
        .iter()
        .zip(c.column(b).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Minimum spanning tree of the complete landmark graph with edge cost
/// `‖c_k − c_k'‖²` (Kruskal). Equal costs are resolved in lexicographic
/// `(k, k')` order. One landmark gives the empty tree.
pub fn update_g(c: &DMatrix<f64>) -> TreeGraph {
    let k = c.ncols();
    if k <= 1 {
        return TreeGraph::empty();
    }
    let mut cand = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            cand.push((edge_cost(c, a, b), a, b));
        }
    }
    // stable sort keeps lexicographic order among equal costs
    cand.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut uf = UnionFind::new(k);
    let mut edges = Vec::with_capacity(k - 1);
    for (_, a, b) in cand {
        if uf.union(a, b) {
            edges.push((a, b));
            if edges.len() == k - 1 {
                break;
            }
        }
    }
    TreeGraph::new(k, edges).expect("Kruskal output is a spanning tree")
}
