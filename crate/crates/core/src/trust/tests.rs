use super::*;
use crate::crypto::{generate_keypair, KeyPair};
use crate::identity::new_endorsement;

struct Fixture {
    graph: TrustGraph,
    keys: Vec<KeyPair>,
    clock: u64,
}

impl Fixture {
    fn new() -> Self {
        Fixture { graph: TrustGraph::new(), keys: Vec::new(), clock: 0 }
    }

    fn add(&mut self, role: Role) -> Did {
        let k = generate_keypair(Some(&[self.keys.len() as u8 + 1; 32])).unwrap();
        let did = Did::from_key(&k.public());
        self.graph.add_node(did.clone(), role).unwrap();
        self.keys.push(k);
        did
    }

    fn key_of(&self, did: &Did) -> &KeyPair {
        self.keys.iter().find(|k| Did::from_key(&k.public()) == *did).unwrap()
    }

    fn endorse(&mut self, from: &Did, to: &Did, score: f64) -> Result<EdgeUpdate, TrustError> {
        self.clock += 1;
        let k = self.key_of(from).clone();
        let e = new_endorsement(&k, to, score, self.clock).unwrap();
        self.graph.add_endorsement(e, &k.public())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn manufacturer_endorsement_creates_edge() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    assert_eq!(f.endorse(&m, &u, 0.9).unwrap(), EdgeUpdate::Inserted);
    assert_eq!(f.graph.endorsement(&m, &u).unwrap().score, 0.9);
}

#[test]
fn self_endorsement_rejected() {
    let mut f = Fixture::new();
    let u = f.add(Role::User);
    let k = f.keys[0].clone();
    let mut e = new_endorsement(&k, &Did::from_key(&generate_keypair(Some(&[99; 32])).unwrap().public()), 0.5, 1).unwrap();
    e.subject = u.clone();
    assert_eq!(f.graph.add_endorsement(e, &k.public()), Err(TrustError::SelfEndorsement));
}

#[test]
fn later_endorsement_replaces_earlier() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    f.endorse(&m, &u, 0.9).unwrap();
    assert_eq!(f.endorse(&m, &u, 0.4).unwrap(), EdgeUpdate::Replaced);
    assert_eq!(f.graph.edge_count(), 1);
    assert_eq!(f.graph.endorsement(&m, &u).unwrap().score, 0.4);

    let stale = new_endorsement(f.key_of(&m), &u, 0.1, 0).unwrap();
    let pk = f.key_of(&m).public();
    assert_eq!(f.graph.add_endorsement(stale, &pk).unwrap(), EdgeUpdate::Stale);
    assert_eq!(f.graph.endorsement(&m, &u).unwrap().score, 0.4);
}

#[test]
fn bad_signature_and_unknown_party_rejected() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    let mut e = new_endorsement(f.key_of(&m), &u, 0.9, 1).unwrap();
    e.score = 1.0;
    let pk = f.key_of(&m).public();
    assert_eq!(f.graph.add_endorsement(e, &pk), Err(TrustError::InvalidEndorsement));

    let stranger = generate_keypair(Some(&[200; 32])).unwrap();
    let e = new_endorsement(&stranger, &u, 0.9, 1).unwrap();
    assert!(matches!(f.graph.add_endorsement(e, &stranger.public()), Err(TrustError::UnknownPrincipal(_))));
}

#[test]
fn direct_trust_identity_case() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    f.endorse(&m, &u, 1.0).unwrap();
    assert_eq!(f.graph.direct_trust(&u).unwrap().value(), 1.0);
    assert_eq!(f.graph.direct_trust(&m).unwrap().value(), 1.0);
}

/// m -0.8-> s, m -0.5-> a, a -0.6-> s. T(a) = 0.5, so
/// T(s) = (1.0 * 0.8 + 0.5 * 0.6) / 2 = 0.55.
fn weighted_fixture() -> (Fixture, Did) {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let a = f.add(Role::User);
    let s = f.add(Role::User);
    f.endorse(&m, &a, 0.5).unwrap();
    f.endorse(&m, &s, 0.8).unwrap();
    f.endorse(&a, &s, 0.6).unwrap();
    (f, s)
}

#[test]
fn direct_trust_weighted_mean() {
    let (f, s) = weighted_fixture();
    assert!(close(f.graph.direct_trust(&s).unwrap().value(), 0.55));
    assert!(close(f.graph.trust_score(&s).value(), 0.55));
}

#[test]
fn direct_trust_needs_endorsements() {
    let mut f = Fixture::new();
    let u = f.add(Role::User);
    assert_eq!(f.graph.direct_trust(&u), Err(TrustError::NoEndorsements(u)));
}

#[test]
fn chain_propagation() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let a = f.add(Role::User);
    let b = f.add(Role::User);
    f.endorse(&m, &a, 0.9).unwrap();
    f.endorse(&a, &b, 0.8).unwrap();
    let (score, path) = f.graph.propagated_trust(&b).unwrap();
    assert!(close(score.value(), 0.72));
    assert_eq!(path.chain, vec![m, a, b.clone()]);
    assert_eq!(path.factors, vec![0.9, 0.8]);
    assert!(close(f.graph.trust_score(&b).value(), 0.72));
}

#[test]
fn single_hop_propagation_equals_direct() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    f.endorse(&m, &u, 0.65).unwrap();
    let (p, path) = f.graph.propagated_trust(&u).unwrap();
    assert_eq!(p, f.graph.direct_trust(&u).unwrap());
    assert_eq!(path.chain.len(), 2);
}

#[test]
fn best_of_two_chains() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let a = f.add(Role::User);
    let c = f.add(Role::User);
    let s = f.add(Role::User);
    f.endorse(&m, &a, 0.9).unwrap();
    f.endorse(&a, &s, 0.8).unwrap();
    f.endorse(&m, &c, 0.8).unwrap();
    f.endorse(&c, &s, 0.8).unwrap();
    let (score, path) = f.graph.propagated_trust(&s).unwrap();
    assert!(close(score.value(), 0.72));
    assert_eq!(path.chain, vec![m, a, s]);
}

#[test]
fn unreachable_scores_zero() {
    let mut f = Fixture::new();
    let _m = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    let v = f.add(Role::User);
    f.endorse(&v, &u, 1.0).unwrap();
    assert_eq!(f.graph.trust_score(&u).value(), 0.0);
    assert_eq!(f.graph.propagated_trust(&u), Err(TrustError::NoTrustLinkage(u.clone())));
    assert_eq!(f.graph.find_trust_linkage(&v), Err(TrustError::NoTrustLinkage(v.clone())));
    let unknown = Did::from_key(&generate_keypair(Some(&[77; 32])).unwrap().public());
    assert_eq!(f.graph.trust_score(&unknown).value(), 0.0);
}

#[test]
fn root_fixpoint_ignores_incoming() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let m2 = f.add(Role::Manufacturer);
    let u = f.add(Role::User);
    f.endorse(&m2, &m, 0.1).unwrap();
    f.endorse(&u, &m, 0.0).unwrap();
    assert_eq!(f.graph.trust_score(&m).value(), 1.0);
    assert!(f.graph.is_onboardable(&m, Threshold::new(1.0).unwrap()).admitted);
}

#[test]
fn threshold_decisions() {
    let (f, s) = weighted_fixture();
    assert!(f.graph.is_onboardable(&s, Threshold::new(0.5).unwrap()).admitted);
    assert!(!f.graph.is_onboardable(&s, Threshold::new(0.6).unwrap()).admitted);
    assert!(Threshold::new(0.0).is_err());
    assert!(Threshold::new(1.2).is_err());
}

#[test]
fn cycles_terminate() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let a = f.add(Role::User);
    let b = f.add(Role::User);
    let c = f.add(Role::User);
    f.endorse(&m, &a, 0.9).unwrap();
    f.endorse(&a, &b, 0.9).unwrap();
    f.endorse(&b, &c, 0.9).unwrap();
    f.endorse(&c, &a, 0.9).unwrap();
    f.endorse(&b, &a, 0.2).unwrap();
    let first: Vec<f64> = [&a, &b, &c].iter().map(|d| f.graph.trust_score(d).value()).collect();
    let again: Vec<f64> = [&a, &b, &c].iter().map(|d| f.graph.trust_score(d).value()).collect();
    assert_eq!(first, again);
    // a is directly endorsed: (1*0.9 + T(c|a excluded)*0.9 + T(b|a excluded)*0.2) / 3, and
    // with a excluded neither b nor c can reach a manufacturer.
    assert!(close(first[0], 0.3));
    // b's evidence drops b's own endorsement of a: T(a|b) = (0.9 + 0) / 2.
    assert!(close(first[1], 0.45 * 0.9));
    // c: T(a|c) = 0.45, T(b|c) = T(a|b,c) * 0.9 = 0.81, last hop 0.9.
    assert!(close(first[2], 0.45 * 0.81 * 0.9));
}

#[test]
fn linkage_for_direct_and_proxy_routes() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let p = f.add(Role::User);
    let u = f.add(Role::User);
    let direct = f.add(Role::User);
    f.endorse(&m, &direct, 0.7).unwrap();
    f.endorse(&m, &p, 0.9).unwrap();
    f.endorse(&p, &u, 0.8).unwrap();

    assert_eq!(f.graph.find_trust_linkage(&direct).unwrap().chain, vec![m.clone(), direct.clone()]);
    let via_proxy = f.graph.find_trust_linkage(&u).unwrap();
    assert_eq!(via_proxy.chain, vec![m.clone(), p.clone(), u.clone()]);
    assert!(f.graph.verify_linkage(&via_proxy, &u).is_ok());

    let anchored_at_p = TrustPath { chain: vec![p.clone(), u.clone()], factors: vec![0.8], score: TrustScore::new(0.8).unwrap() };
    assert!(f.graph.verify_linkage(&anchored_at_p, &u).is_err());
    f.graph.designate_proxy(&m, &p, Threshold::new(0.8).unwrap()).unwrap();
    assert!(f.graph.is_proxy(&p));
    assert!(f.graph.verify_linkage(&anchored_at_p, &u).is_ok());
    // proxies gain procedural rights only
    assert!(close(f.graph.trust_score(&u).value(), 0.72));
}

#[test]
fn proxy_designation_errors() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let p = f.add(Role::User);
    let q = f.add(Role::User);
    f.endorse(&m, &p, 0.5).unwrap();
    assert!(matches!(
        f.graph.designate_proxy(&m, &p, Threshold::new(0.8).unwrap()),
        Err(TrustError::ProxyTrustTooLow { .. })
    ));
    assert_eq!(
        f.graph.designate_proxy(&q, &p, Threshold::new(0.1).unwrap()),
        Err(TrustError::NotAManufacturer(q.clone()))
    );
}

#[test]
fn linkage_rejects_missing_edges_and_loops() {
    let mut f = Fixture::new();
    let m = f.add(Role::Manufacturer);
    let a = f.add(Role::User);
    let u = f.add(Role::User);
    f.endorse(&m, &a, 0.9).unwrap();
    let fake = TrustPath { chain: vec![m.clone(), a.clone(), u.clone()], factors: vec![0.9, 0.9], score: TrustScore::new(0.81).unwrap() };
    assert!(f.graph.verify_linkage(&fake, &u).is_err());
    f.endorse(&a, &u, 0.9).unwrap();
    assert!(f.graph.verify_linkage(&fake, &u).is_ok());
    let looped = TrustPath { chain: vec![m.clone(), a.clone(), m.clone(), a.clone(), u.clone()], ..fake };
    assert!(f.graph.verify_linkage(&looped, &u).is_err());
}

#[test]
fn snapshot_is_sorted_and_stable() {
    let (f, _) = weighted_fixture();
    let a = crate::canonical::to_string(&f.graph).unwrap();
    let b = crate::canonical::to_string(&f.graph.clone()).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with(r#"{"fmt":"1","edges":["#));
}
