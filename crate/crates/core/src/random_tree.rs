//! Uniform labelled trees and the forest obtained by opening their edges in
//! random order.
//!
//! All edges start closed, so every vertex is its own sub-tree. Opening the
//! edges of a uniform tree on `n` vertices one at a time, in a uniformly
//! random order, joins sub-trees; the ranked sub-tree sizes divided by `n`
//! form a chain with the same law as the state chain of the additive
//! coalescent started from `n` clusters of mass `1/n`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mass::RankedMassVector;

/// Spanning tree on vertices `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledTree {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl LabelledTree {
    /// Build a tree from an explicit edge list, checking that it spans
    /// `1..=n` without cycles.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_arg("a tree needs at least one vertex"));
        }
        if edges.len() != n - 1 {
            return Err(Error::invalid_arg(format!(
                "{} edges cannot span {n} vertices",
                edges.len()
            )));
        }
        let mut uf = UnionFind::new(n);
        for &(a, b) in &edges {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::invalid_arg(format!("edge ({a}, {b}) out of range")));
            }
            if !uf.union(a - 1, b - 1) {
                return Err(Error::invalid_arg(format!("edge ({a}, {b}) closes a cycle")));
            }
        }
        let edges = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(smaller, larger)` label pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges sorted lexicographically; a canonical key for the tree.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    /// Prüfer code of the tree (inverse of [`prufer_decode`]).
    pub fn prufer_code(&self) -> Vec<usize> {
        let n = self.n;
        if n <= 2 {
            return Vec::new();
        }
        let mut adjacency = vec![Vec::new(); n + 1];
        let mut degree = vec![0usize; n + 1];
        for &(a, b) in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut leaves: BinaryHeap<Reverse<usize>> =
            (1..=n).filter(|&v| degree[v] == 1).map(Reverse).collect();
        let mut removed = vec![false; n + 1];
        let mut code = Vec::with_capacity(n - 2);
        while code.len() < n - 2 {
            let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
            removed[leaf] = true;
            let parent = *adjacency[leaf]
                .iter()
                .find(|&&v| !removed[v])
                .expect("leaf has a live neighbour");
            code.push(parent);
            degree[parent] -= 1;
            if degree[parent] == 1 {
                leaves.push(Reverse(parent));
            }
        }
        code
    }
}

/// Decode a Prüfer sequence of length `n - 2` over labels `1..=n`.
pub fn prufer_decode(seq: &[usize], n: usize) -> Result<LabelledTree> {
    if n < 2 {
        return Err(Error::invalid_arg("Prüfer decoding needs n >= 2"));
    }
    if seq.len() != n - 2 {
        return Err(Error::invalid_arg(format!(
            "sequence of length {} does not encode a tree on {n} vertices",
            seq.len()
        )));
    }
    if let Some(&bad) = seq.iter().find(|&&v| v == 0 || v > n) {
        return Err(Error::invalid_arg(format!("label {bad} outside 1..={n}")));
    }
    let mut degree = vec![1usize; n + 1];
    for &v in seq {
        degree[v] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let Reverse(leaf) = leaves.pop().expect("Prüfer invariant: a leaf exists");
        edges.push((leaf.min(v), leaf.max(v)));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.push(Reverse(v));
        }
    }
    let Reverse(a) = leaves.pop().expect("two leaves remain");
    let Reverse(b) = leaves.pop().expect("two leaves remain");
    edges.push((a.min(b), a.max(b)));
    Ok(LabelledTree { n, edges })
}

/// Uniform tree among the `n^(n-2)` labelled trees on `n` vertices.
pub fn sample_uniform_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LabelledTree> {
    match n {
        0 => Err(Error::invalid_arg("n must be at least 1")),
        1 => Ok(LabelledTree {
            n: 1,
            edges: Vec::new(),
        }),
        _ => {
            let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(1..=n)).collect();
            prufer_decode(&seq, n)
        }
    }
}

#[derive(Debug, Clone)]
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Join the sets of `a` and `b`; false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestChain {
    /// Edges in the order they were opened.
    pub opening_order: Vec<(usize, usize)>,
    /// `states[k]`: ranked sub-tree sizes divided by `n` after `k` edges are
    /// open. `states[0]` is all singletons, `states[n-1] = (1)`.
    pub states: Vec<RankedMassVector>,
}

/// Open the edges of `tree` in uniformly random order and record the ranked
/// sub-tree sizes, tracked by union-find.
pub fn forest_chain<R: Rng + ?Sized>(tree: &LabelledTree, rng: &mut R) -> ForestChain {
    let n = tree.n;
    let mut order = tree.edges.clone();
    order.shuffle(rng);

    let mut uf = UnionFind::new(n);
    let mut sizes: Vec<usize> = vec![1; n];
    let mut states = Vec::with_capacity(n);
    states.push(ranked_sizes(&sizes, n));
    for &(a, b) in &order {
        let (ra, rb) = (uf.find(a - 1), uf.find(b - 1));
        let merged = uf.size[ra] + uf.size[rb];
        remove_one(&mut sizes, uf.size[ra]);
        remove_one(&mut sizes, uf.size[rb]);
        sizes.push(merged);
        uf.union(ra, rb);
        states.push(ranked_sizes(&sizes, n));
    }
    ForestChain {
        opening_order: order,
        states,
    }
}

fn remove_one(sizes: &mut Vec<usize>, value: usize) {
    let at = sizes
        .iter()
        .position(|&s| s == value)
        .expect("component size is tracked");
    sizes.swap_remove(at);
}

fn ranked_sizes(sizes: &[usize], n: usize) -> RankedMassVector {
    let mut masses: Vec<f64> = sizes.iter().map(|&s| s as f64 / n as f64).collect();
    masses.sort_by(|a, b| b.total_cmp(a));
    RankedMassVector::from_sorted_unchecked(masses)
}
