//! Web of trust: endorsement graph, trust scores and onboarding decisions.
//!
//! Manufacturers are the root of trust and always score 1.0. Any other
//! issuer's score comes from the endorsements pointing at it:
//!
//! * If at least one manufacturer endorses the subject directly, the score is
//!   the weighted mean of all its endorsements, `(1/|E|) * sum(w_k * e_k)`,
//!   where each weight `w_k` is the endorser's own trust score.
//! * Otherwise the score is the best product along any simple chain of
//!   endorsements from a manufacturer: the trust scores of the intermediate
//!   issuers multiplied by the score of the final endorsement into the
//!   subject.
//! * Issuers with no chain to a manufacturer score 0.0.
//!
//! Scores are recursive (an endorser's weight is its own score), so cycles
//! are cut by evaluating every piece of evidence with the subject removed
//! from the graph. See [`eval`] for the exact evaluation order.

mod eval;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;
use crate::identity::{Did, Endorsement, Record, Role};

pub use eval::Evaluator;

/// Default onboarding threshold.
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrustError {
    #[error("endorsement signature or contents invalid")]
    InvalidEndorsement,
    #[error("an issuer cannot endorse itself")]
    SelfEndorsement,
    #[error("{0} is not registered in the trust graph")]
    UnknownPrincipal(Did),
    #[error("{0} is already registered in the trust graph")]
    AlreadyRegistered(Did),
    #[error("only manufacturers and users take part in the web of trust")]
    NotAnIssuer,
    #[error("{0} has no endorsements")]
    NoEndorsements(Did),
    #[error("{0} has no chain of endorsements to a manufacturer")]
    NoTrustLinkage(Did),
    #[error("proxy trust {score} is below the required {required}")]
    ProxyTrustTooLow { score: f64, required: f64 },
    #[error("{0} is not a manufacturer")]
    NotAManufacturer(Did),
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// A trust value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrustScore(f64);

impl TrustScore {
    pub const ZERO: TrustScore = TrustScore(0.0);
    pub const ONE: TrustScore = TrustScore(1.0);

    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(TrustScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for TrustScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Onboarding threshold `tau`, `0 < tau <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self, TrustError> {
        if tau > 0.0 && tau <= 1.0 {
            Ok(Threshold(tau))
        } else {
            Err(TrustError::InvalidThreshold(tau))
        }
    }

    pub fn tau(self) -> f64 {
        self.0
    }

    pub fn admits(self, score: TrustScore) -> bool {
        score.0 >= self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(DEFAULT_TAU)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = TrustError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Threshold::new(v)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// A chain of endorsements from an anchor (manufacturer or proxy) to a
/// subject, with the per-hop factors whose product is `score`.
///
/// `factors[i]` belongs to `chain[i + 1]`: the trust score of each
/// intermediate issuer, and for the last hop the endorsement score into the
/// subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustPath {
    pub chain: Vec<Did>,
    pub factors: Vec<f64>,
    pub score: TrustScore,
}

impl TrustPath {
    pub fn anchor(&self) -> &Did {
        &self.chain[0]
    }

    pub fn subject(&self) -> &Did {
        self.chain.last().expect("trust paths are never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnboardDecision {
    pub admitted: bool,
    pub score: TrustScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeUpdate {
    Inserted,
    Replaced,
    /// An endorsement with a later timestamp already exists for the pair.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NodeInfo {
    role: Role,
    proxy: bool,
}

/// The endorsement graph over manufacturers and users.
///
/// Nodes are indexed in registration order; ties between equally good
/// chains are broken by that order, so two graphs built from the same
/// sequence of updates always produce the same witnesses.
#[derive(Debug, Clone, Default)]
pub struct TrustGraph {
    dids: Vec<Did>,
    index: HashMap<Did, usize>,
    info: Vec<NodeInfo>,
    edges: HashMap<(usize, usize), Endorsement>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl TrustGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, did: Did, role: Role) -> Result<(), TrustError> {
        if role == Role::Device {
            return Err(TrustError::NotAnIssuer);
        }
        if self.index.contains_key(&did) {
            return Err(TrustError::AlreadyRegistered(did));
        }
        let i = self.dids.len();
        self.index.insert(did.clone(), i);
        self.dids.push(did);
        self.info.push(NodeInfo { role, proxy: false });
        self.preds.push(Vec::new());
        self.succs.push(Vec::new());
        Ok(())
    }

    pub fn contains(&self, did: &Did) -> bool {
        self.index.contains_key(did)
    }

    pub fn len(&self) -> usize {
        self.dids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_root(&self, did: &Did) -> bool {
        self.index.get(did).is_some_and(|&i| self.info[i].role == Role::Manufacturer)
    }

    pub fn is_proxy(&self, did: &Did) -> bool {
        self.index.get(did).is_some_and(|&i| self.info[i].proxy)
    }

    /// All registered principals with their role and proxy flag, in
    /// registration order.
    pub fn nodes(&self) -> impl Iterator<Item = (&Did, Role, bool)> {
        self.dids.iter().zip(&self.info).map(|(d, n)| (d, n.role, n.proxy))
    }

    /// Every endorsement edge, in no particular order.
    pub fn endorsements(&self) -> impl Iterator<Item = &Endorsement> {
        self.edges.values()
    }

    /// Canonical text of the graph snapshot (see the `Serialize` impl).
    pub fn export(&self) -> String {
        crate::canonical::to_string(self).expect("endorsement scores are finite")
    }

    pub fn roots(&self) -> impl Iterator<Item = &Did> {
        self.dids.iter().zip(&self.info).filter(|(_, n)| n.role == Role::Manufacturer).map(|(d, _)| d)
    }

    pub fn endorsement(&self, endorser: &Did, subject: &Did) -> Option<&Endorsement> {
        let key = (*self.index.get(endorser)?, *self.index.get(subject)?);
        self.edges.get(&key)
    }

    /// Endorsements received by `subject`, in insertion order.
    pub fn incoming(&self, subject: &Did) -> impl Iterator<Item = &Endorsement> {
        let v = self.index.get(subject).copied();
        v.into_iter().flat_map(move |v| self.preds[v].iter().map(move |&u| &self.edges[&(u, v)]))
    }

    /// Inserts `e`, replacing an older endorsement for the same ordered pair.
    pub fn add_endorsement(&mut self, e: Endorsement, endorser_key: &PublicKey) -> Result<EdgeUpdate, TrustError> {
        if e.endorser == e.subject {
            return Err(TrustError::SelfEndorsement);
        }
        let u = *self.index.get(&e.endorser).ok_or_else(|| TrustError::UnknownPrincipal(e.endorser.clone()))?;
        let v = *self.index.get(&e.subject).ok_or_else(|| TrustError::UnknownPrincipal(e.subject.clone()))?;
        if e.validate().is_err() || !e.endorser.matches_key(endorser_key) || !e.verify(endorser_key) {
            return Err(TrustError::InvalidEndorsement);
        }
        match self.edges.get_mut(&(u, v)) {
            Some(existing) if existing.endorsed_at > e.endorsed_at => Ok(EdgeUpdate::Stale),
            Some(existing) => {
                *existing = e;
                Ok(EdgeUpdate::Replaced)
            }
            None => {
                self.edges.insert((u, v), e);
                self.preds[v].push(u);
                self.succs[u].push(v);
                Ok(EdgeUpdate::Inserted)
            }
        }
    }

    /// Grants `proxy` the right to anchor onboarding linkages. Proxies get no
    /// score bonus.
    pub fn designate_proxy(&mut self, manufacturer: &Did, proxy: &Did, min_trust: Threshold) -> Result<(), TrustError> {
        if !self.is_root(manufacturer) {
            return Err(TrustError::NotAManufacturer(manufacturer.clone()));
        }
        let p = *self.index.get(proxy).ok_or_else(|| TrustError::UnknownPrincipal(proxy.clone()))?;
        let score = self.trust_score(proxy);
        if !min_trust.admits(score) {
            return Err(TrustError::ProxyTrustTooLow { score: score.value(), required: min_trust.tau() });
        }
        self.info[p].proxy = true;
        Ok(())
    }

    /// Weighted mean of the subject's endorsements, each weighted by the
    /// endorser's trust score.
    pub fn direct_trust(&self, subject: &Did) -> Result<TrustScore, TrustError> {
        let v = self.node(subject)?;
        if self.info[v].role == Role::Manufacturer {
            return Ok(TrustScore::ONE);
        }
        if self.preds[v].is_empty() {
            return Err(TrustError::NoEndorsements(subject.clone()));
        }
        Ok(TrustScore(Evaluator::new(self).direct(v)))
    }

    /// Best product over all simple chains from a manufacturer to `subject`.
    pub fn propagated_trust(&self, subject: &Did) -> Result<(TrustScore, TrustPath), TrustError> {
        let v = self.node(subject)?;
        let path = Evaluator::new(self)
            .best_path(v)
            .ok_or_else(|| TrustError::NoTrustLinkage(subject.clone()))?;
        Ok((path.score, path))
    }

    /// Total trust function: 1.0 for manufacturers, direct trust when a
    /// manufacturer endorses the subject, propagated trust otherwise, and 0.0
    /// for unknown or unreachable principals.
    pub fn trust_score(&self, subject: &Did) -> TrustScore {
        match self.index.get(subject) {
            Some(&v) => TrustScore(Evaluator::new(self).score(v)),
            None => TrustScore::ZERO,
        }
    }

    pub fn is_onboardable(&self, subject: &Did, threshold: Threshold) -> OnboardDecision {
        let score = self.trust_score(subject);
        OnboardDecision { admitted: threshold.admits(score), score }
    }

    /// The linkage an issuer presents when onboarding: the strongest direct
    /// manufacturer endorsement if one exists, else the best chain.
    pub fn find_trust_linkage(&self, subject: &Did) -> Result<TrustPath, TrustError> {
        let v = self.node(subject)?;
        if self.info[v].role == Role::Manufacturer {
            return Ok(TrustPath { chain: vec![subject.clone()], factors: vec![], score: TrustScore::ONE });
        }
        let best_direct = self.preds[v]
            .iter()
            .filter(|&&u| self.info[u].role == Role::Manufacturer)
            .map(|&u| (u, self.edges[&(u, v)].score))
            .fold(None::<(usize, f64)>, |best, (u, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((u, s)),
            });
        if let Some((m, s)) = best_direct {
            return Ok(TrustPath { chain: vec![self.dids[m].clone(), subject.clone()], factors: vec![s], score: TrustScore(s) });
        }
        self.propagated_trust(subject).map(|(_, path)| path)
    }

    /// Checks that `path` is a simple chain of existing endorsements ending
    /// at `subject` and anchored at a manufacturer or a designated proxy.
    pub fn verify_linkage(&self, path: &TrustPath, subject: &Did) -> Result<(), TrustError> {
        let unverifiable = || TrustError::NoTrustLinkage(subject.clone());
        if path.chain.len() < 2 || path.subject() != subject {
            return Err(unverifiable());
        }
        let anchor = path.anchor();
        if !self.is_root(anchor) && !self.is_proxy(anchor) {
            return Err(unverifiable());
        }
        let mut seen = std::collections::HashSet::new();
        for did in &path.chain {
            if !seen.insert(did) {
                return Err(unverifiable());
            }
        }
        for hop in path.chain.windows(2) {
            if self.endorsement(&hop[0], &hop[1]).is_none() {
                return Err(unverifiable());
            }
        }
        Ok(())
    }

    fn node(&self, did: &Did) -> Result<usize, TrustError> {
        self.index.get(did).copied().ok_or_else(|| TrustError::UnknownPrincipal(did.clone()))
    }
}

#[derive(Serialize)]
struct NodeView<'a> {
    did: &'a Did,
    role: Role,
    proxy: bool,
}

#[derive(Serialize)]
struct GraphView<'a> {
    nodes: Vec<NodeView<'a>>,
    edges: Vec<&'a Endorsement>,
}

/// Snapshot encoding: nodes sorted by DID, edges sorted by (endorser, subject).
impl Serialize for TrustGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut nodes: Vec<NodeView<'_>> = self
            .dids
            .iter()
            .zip(&self.info)
            .map(|(did, n)| NodeView { did, role: n.role, proxy: n.proxy })
            .collect();
        nodes.sort_by(|a, b| a.did.cmp(b.did));
        let sorted: BTreeMap<(&Did, &Did), &Endorsement> =
            self.edges.values().map(|e| ((&e.endorser, &e.subject), e)).collect();
        GraphView { nodes, edges: sorted.into_values().collect() }.serialize(s)
    }
}

#[cfg(test)]
mod tests;
