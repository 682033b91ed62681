//! Memoized trust evaluation.
//!
//! `score(v, X)` is the trust of `v` when the principals in `X` are removed
//! from the evidence (their endorsements are ignored and no chain may pass
//! through them). The public score is `score(v, {})`. Evaluating `v`'s
//! evidence always adds `v` to `X`, which is what keeps the recursion
//! finite on cyclic graphs.
//!
//! Only members of `X` that can reach `v` influence the result, so the memo
//! key is `(v, X ∩ ancestors(v))`. On acyclic graphs that intersection is
//! always empty and every node is evaluated once.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::{TrustGraph, TrustPath, TrustScore};
use crate::identity::Role;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
struct NodeSet(Vec<u64>);

impl NodeSet {
    fn with_capacity(n: usize) -> Self {
        NodeSet(vec![0; n.div_ceil(64)])
    }

    fn contains(&self, i: usize) -> bool {
        self.0.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn intersect(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
}

/// Max-heap entry: larger product first, then lower node index.
#[derive(PartialEq)]
struct Candidate {
    product: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.product.total_cmp(&other.product).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Evaluator<'g> {
    graph: &'g TrustGraph,
    ancestors: Vec<Option<NodeSet>>,
    memo: HashMap<(usize, NodeSet), f64>,
}

impl<'g> Evaluator<'g> {
    pub fn new(graph: &'g TrustGraph) -> Self {
        Evaluator { graph, ancestors: vec![None; graph.len()], memo: HashMap::new() }
    }

    fn is_root(&self, v: usize) -> bool {
        self.graph.info[v].role == Role::Manufacturer
    }

    fn empty(&self) -> NodeSet {
        NodeSet::with_capacity(self.graph.len())
    }

    /// Nodes with a path of length >= 1 into `v`.
    fn ancestors(&mut self, v: usize) -> NodeSet {
        if let Some(a) = &self.ancestors[v] {
            return a.clone();
        }
        let mut seen = self.empty();
        let mut stack: Vec<usize> = self.graph.preds[v].clone();
        while let Some(u) = stack.pop() {
            if seen.contains(u) {
                continue;
            }
            seen.insert(u);
            stack.extend(self.graph.preds[u].iter().copied().filter(|&w| !seen.contains(w)));
        }
        self.ancestors[v] = Some(seen.clone());
        seen
    }

    pub(super) fn score(&mut self, v: usize) -> f64 {
        let none = self.empty();
        self.score_excluding(v, &none)
    }

    pub(super) fn direct(&mut self, v: usize) -> f64 {
        let none = self.empty();
        self.direct_excluding(v, &none)
    }

    pub(super) fn best_path(&mut self, v: usize) -> Option<TrustPath> {
        let none = self.empty();
        let (score, chain, factors) = self.best_path_excluding(v, &none)?;
        Some(TrustPath {
            chain: chain.into_iter().map(|i| self.graph.dids[i].clone()).collect(),
            factors,
            score: TrustScore(score),
        })
    }

    fn score_excluding(&mut self, v: usize, excluded: &NodeSet) -> f64 {
        if self.is_root(v) {
            return 1.0;
        }
        let key = excluded.intersect(&self.ancestors(v));
        if let Some(&s) = self.memo.get(&(v, key.clone())) {
            return s;
        }
        let has_root_endorser = self.graph.preds[v].iter().any(|&u| !key.contains(u) && self.is_root(u));
        let s = if has_root_endorser {
            self.direct_excluding(v, &key)
        } else {
            self.best_path_excluding(v, &key).map_or(0.0, |(s, _, _)| s)
        };
        self.memo.insert((v, key), s);
        s
    }

    /// Weighted mean over the endorsements of `v` whose endorser is not
    /// excluded; weights are evaluated with `v` excluded as well.
    fn direct_excluding(&mut self, v: usize, excluded: &NodeSet) -> f64 {
        if self.is_root(v) {
            return 1.0;
        }
        let mut inner = excluded.clone();
        inner.insert(v);
        let preds: Vec<usize> = self.graph.preds[v].iter().copied().filter(|&u| !excluded.contains(u)).collect();
        if preds.is_empty() {
            return 0.0;
        }
        let mut sum = 0.0;
        for &u in &preds {
            let weight = self.score_excluding(u, &inner);
            sum += weight * self.graph.edges[&(u, v)].score;
        }
        sum / preds.len() as f64
    }

    /// Max-product chain into `v` avoiding `excluded`. Every intermediate
    /// contributes its own score (with `v` excluded); the final hop
    /// contributes the endorsement score. Factors never exceed 1, so a
    /// Dijkstra-style search over products finds the best simple chain.
    fn best_path_excluding(&mut self, v: usize, excluded: &NodeSet) -> Option<(f64, Vec<usize>, Vec<f64>)> {
        let n = self.graph.len();
        let ancestors = self.ancestors(v);
        let allowed = |i: usize| i != v && ancestors.contains(i) && !excluded.contains(i);
        let mut inner = excluded.clone();
        inner.insert(v);

        let mut best: Vec<Option<f64>> = vec![None; n];
        let mut factor: Vec<f64> = vec![1.0; n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for r in (0..n).filter(|&r| self.is_root(r) && allowed(r)) {
            best[r] = Some(1.0);
            heap.push(Candidate { product: 1.0, node: r });
        }
        while let Some(Candidate { product, node: x }) = heap.pop() {
            if done[x] {
                continue;
            }
            done[x] = true;
            for y in self.graph.succs[x].clone() {
                if !allowed(y) || done[y] || self.is_root(y) {
                    continue;
                }
                let f = self.score_excluding(y, &inner);
                let cand = product * f;
                if best[y].map_or(true, |b| cand > b) {
                    best[y] = Some(cand);
                    factor[y] = f;
                    parent[y] = Some(x);
                    heap.push(Candidate { product: cand, node: y });
                }
            }
        }

        let mut last: Option<(usize, f64)> = None;
        for &u in &self.graph.preds[v] {
            let Some(q) = best[u].filter(|_| done[u]) else { continue };
            let total = q * self.graph.edges[&(u, v)].score;
            if last.map_or(true, |(_, t)| total > t) {
                last = Some((u, total));
            }
        }
        let (u, total) = last?;

        let mut chain = vec![v, u];
        let mut factors = vec![self.graph.edges[&(u, v)].score];
        let mut cur = u;
        while let Some(p) = parent[cur] {
            factors.push(factor[cur]);
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        factors.reverse();
        Some((total, chain, factors))
    }
}
