//! Brute-force trust evaluator and random endorsement graphs.
//!
//! The evaluator enumerates every simple chain explicitly and evaluates the
//! weighted mean directly. It shares no code with the library's evaluator:
//! no ancestor pruning, no best-first search, and the memo is keyed on the
//! exact exclusion set.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssivdr::crypto::{generate_keypair, KeyPair};
use ssivdr::identity::{new_endorsement, Did, Role};
use ssivdr::trust::TrustGraph;

pub struct OracleGraph {
    pub dids: Vec<Did>,
    pub root: Vec<bool>,
    /// `weight[u][v]` is the endorsement score of u for v.
    pub weight: Vec<Vec<Option<f64>>>,
}

impl OracleGraph {
    pub fn from_graph(g: &TrustGraph) -> Self {
        let dids: Vec<Did> = g.nodes().map(|(d, _, _)| d.clone()).collect();
        let root = g.nodes().map(|(_, r, _)| r == Role::Manufacturer).collect();
        let pos: HashMap<&Did, usize> = dids.iter().enumerate().map(|(i, d)| (d, i)).collect();
        let mut weight = vec![vec![None; dids.len()]; dids.len()];
        for e in g.endorsements() {
            weight[pos[&e.endorser]][pos[&e.subject]] = Some(e.score);
        }
        OracleGraph { dids, root, weight }
    }

    pub fn index(&self, did: &Did) -> usize {
        self.dids.iter().position(|d| d == did).unwrap()
    }

    fn n(&self) -> usize {
        self.dids.len()
    }
}

pub struct Oracle<'a> {
    g: &'a OracleGraph,
    memo: HashMap<(usize, BTreeSet<usize>), f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(g: &'a OracleGraph) -> Self {
        Oracle { g, memo: HashMap::new() }
    }

    pub fn score(&mut self, v: usize) -> f64 {
        self.score_in(v, &BTreeSet::new())
    }

    fn score_in(&mut self, v: usize, excluded: &BTreeSet<usize>) -> f64 {
        if self.g.root[v] {
            return 1.0;
        }
        if let Some(&s) = self.memo.get(&(v, excluded.clone())) {
            return s;
        }
        let mut inner = excluded.clone();
        inner.insert(v);
        let endorsers: Vec<(usize, f64)> = (0..self.g.n())
            .filter(|u| !excluded.contains(u))
            .filter_map(|u| self.g.weight[u][v].map(|e| (u, e)))
            .collect();
        let s = if endorsers.iter().any(|&(u, _)| self.g.root[u]) {
            let total: f64 = endorsers.iter().map(|&(u, e)| self.score_in(u, &inner) * e).sum();
            total / endorsers.len() as f64
        } else {
            self.all_paths(v, excluded)
                .into_iter()
                .map(|path| {
                    let mut product = 1.0;
                    for &x in &path[1..path.len() - 1] {
                        product *= self.score_in(x, &inner);
                    }
                    product * self.g.weight[path[path.len() - 2]][v].unwrap()
                })
                .fold(0.0, f64::max)
        };
        self.memo.insert((v, excluded.clone()), s);
        s
    }

    /// Every simple path from any root to `v` that avoids `excluded`.
    pub fn all_paths(&self, v: usize, excluded: &BTreeSet<usize>) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for r in (0..self.g.n()).filter(|&r| self.g.root[r] && r != v && !excluded.contains(&r)) {
            let mut path = vec![r];
            self.extend(&mut path, v, excluded, &mut out);
        }
        out
    }

    fn extend(&self, path: &mut Vec<usize>, v: usize, excluded: &BTreeSet<usize>, out: &mut Vec<Vec<usize>>) {
        let x = *path.last().unwrap();
        for y in 0..self.g.n() {
            if self.g.weight[x][y].is_none() || excluded.contains(&y) || path.contains(&y) {
                continue;
            }
            path.push(y);
            if y == v {
                out.push(path.clone());
            } else {
                self.extend(path, v, excluded, out);
            }
            path.pop();
        }
    }

    /// Best chain product into `v` over all simple paths, regardless of
    /// whether a manufacturer endorses `v` directly.
    pub fn propagated(&mut self, v: usize) -> Option<f64> {
        let inner: BTreeSet<usize> = [v].into();
        let paths = self.all_paths(v, &BTreeSet::new());
        if paths.is_empty() {
            return None;
        }
        Some(
            paths
                .into_iter()
                .map(|path| {
                    let mut product = 1.0;
                    for &x in &path[1..path.len() - 1] {
                        product *= self.score_in(x, &inner);
                    }
                    product * self.g.weight[path[path.len() - 2]][v].unwrap()
                })
                .fold(0.0, f64::max),
        )
    }
}

pub struct RandomGraph {
    pub graph: TrustGraph,
    pub keys: Vec<KeyPair>,
    pub dids: Vec<Did>,
}

/// Random graph with at most `max_nodes` nodes (1 to 3 of them roots) and at
/// most `max_edges` endorsements. Scores are drawn so that exact 0 and 1
/// occur regularly; cycles arise naturally from the uniform endpoint choice.
pub fn random_graph(seed: u64, max_nodes: usize, max_edges: usize) -> RandomGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let roots = rng.gen_range(1..=3.min(n - 1));
    let mut graph = TrustGraph::new();
    let mut keys = Vec::with_capacity(n);
    let mut dids = Vec::with_capacity(n);
    for i in 0..n {
        let mut seed_bytes = [0u8; 32];
        seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
        seed_bytes[8] = i as u8;
        seed_bytes[9] = 0xa5;
        let k = generate_keypair(Some(&seed_bytes)).unwrap();
        let did = Did::from_key(&k.public());
        let role = if i < roots { Role::Manufacturer } else { Role::User };
        graph.add_node(did.clone(), role).unwrap();
        keys.push(k);
        dids.push(did);
    }
    let edges = rng.gen_range(0..=max_edges);
    for t in 0..edges {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let score = match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..=1.0),
        };
        let e = new_endorsement(&keys[u], &dids[v], score, t as u64).unwrap();
        graph.add_endorsement(e, &keys[u].public()).unwrap();
    }
    RandomGraph { graph, keys, dids }
}
