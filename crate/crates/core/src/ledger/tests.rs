use super::*;
use crate::crypto::{generate_keypair, KeyPair};
use crate::identity::{
    new_credential, new_endorsement, Claim, DeviceType, Did, IdentityRecord, Rationale, RevocationRecord,
    VerifiableCredential,
};
use crate::trust::{TrustPath, TrustScore};

struct Fx {
    ledger: Ledger,
    m: KeyPair,
    clock: u64,
}

fn key(n: u8) -> KeyPair {
    generate_keypair(Some(&[n; 32])).unwrap()
}

fn did(k: &KeyPair) -> Did {
    Did::from_key(&k.public())
}

impl Fx {
    fn new(batch_limit: usize, mode: Mode) -> Self {
        let m = key(1);
        let genesis = Genesis::new(&[m.public()], Threshold::new(0.5).unwrap(), batch_limit, mode).unwrap();
        Fx { ledger: Ledger::new(genesis), m, clock: 0 }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn tx(&mut self, k: &KeyPair, payload: Payload) -> Transaction {
        let ts = self.tick();
        Transaction::new(k, payload, ts).unwrap()
    }

    fn submit(&mut self, k: &KeyPair, payload: Payload) -> Receipt {
        let tx = self.tx(k, payload);
        self.ledger.submit(tx)
    }

    fn register_user(&mut self, k: &KeyPair) {
        let r = self.submit(k, Payload::Register { record: IdentityRecord::user(&k.public()) });
        assert!(r.is_committed(), "{r:?}");
    }

    fn register_device(&mut self, owner: &KeyPair, dev: &KeyPair) {
        let record = IdentityRecord::device(&dev.public(), DeviceType::Strong, did(owner));
        let r = self.submit(owner, Payload::Register { record });
        assert!(r.is_committed(), "{r:?}");
    }

    fn endorse(&mut self, from: &KeyPair, to: &KeyPair, score: f64) {
        let ts = self.tick();
        let endorsement = new_endorsement(from, &did(to), score, ts).unwrap();
        let r = self.submit(from, Payload::Endorse { endorsement });
        assert!(r.is_committed(), "{r:?}");
    }

    fn onboard(&mut self, k: &KeyPair) -> Receipt {
        let subject = IdentityRecord::user(&k.public());
        let linkage = self.ledger.read(|s| s.trust_graph().find_trust_linkage(&subject.did)).unwrap();
        self.submit(k, Payload::Onboard { subject, linkage })
    }

    fn credential(&mut self, issuer: &KeyPair, holder: &Did) -> VerifiableCredential {
        let record = self.ledger.read(|s| s.identity(&did(issuer)).cloned()).unwrap();
        let ts = self.tick();
        new_credential(&record, issuer, holder, vec![Claim::new("model", "x1")], ts).unwrap()
    }

    fn revoke(&mut self, k: &KeyPair, vc: &VerifiableCredential, rationale: Rationale) -> Receipt {
        let record = RevocationRecord { vc_id: vc.vc_id, rationale, revoked_at: self.tick(), revoker: did(k) };
        self.submit(k, Payload::Revoke { record })
    }
}

fn rejection(r: &Receipt) -> Rejection {
    r.rejection().cloned().unwrap_or_else(|| panic!("expected rejection, got {r:?}"))
}

#[test]
fn onboard_with_direct_endorsement_admits_with_score() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    fx.endorse(&m, &u, 0.9);
    assert!(fx.onboard(&u).is_committed());
    let score = fx.ledger.read(|s| s.onboarded_issuers().get(&did(&u)).copied());
    assert_eq!(score, TrustScore::new(0.9));
}

#[test]
fn onboard_with_fabricated_edge_is_not_verifiable() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    let linkage = TrustPath { chain: vec![did(&m), did(&u)], factors: vec![0.9], score: TrustScore::new(0.9).unwrap() };
    let subject = IdentityRecord::user(&u.public());
    let r = fx.submit(&u, Payload::Onboard { subject, linkage });
    assert_eq!(rejection(&r), Rejection::LinkageNotVerifiable);
}

#[test]
fn onboard_below_threshold() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    fx.endorse(&m, &u, 0.3);
    assert_eq!(rejection(&fx.onboard(&u)), Rejection::BelowThreshold { score: 0.3, tau: 0.5 });
    assert!(!fx.ledger.read(|s| s.is_onboarded(&did(&u))));
}

#[test]
fn onboard_twice_rejected() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    fx.endorse(&m, &u, 0.9);
    assert!(fx.onboard(&u).is_committed());
    assert_eq!(rejection(&fx.onboard(&u)), Rejection::AlreadyOnboarded);
}

#[test]
fn claimed_score_is_ignored() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    fx.endorse(&m, &u, 0.3);
    let mut linkage = fx.ledger.read(|s| s.trust_graph().find_trust_linkage(&did(&u))).unwrap();
    linkage.score = TrustScore::ONE;
    linkage.factors = vec![1.0];
    let r = fx.submit(&u, Payload::Onboard { subject: IdentityRecord::user(&u.public()), linkage });
    assert!(!r.is_committed());
}

/// Scores 1.0 and 0.5 endorse the issuer with 0.8 and 0.6; the mean is 0.55.
fn weighted_mean_fixture() -> (Fx, KeyPair) {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, a, u) = (fx.m.clone(), key(3), key(2));
    fx.register_user(&a);
    fx.register_user(&u);
    fx.endorse(&m, &a, 0.5);
    fx.endorse(&m, &u, 0.8);
    fx.endorse(&a, &u, 0.6);
    (fx, u)
}

#[test]
fn onboarded_issuer_issues_to_own_device() {
    let (mut fx, u) = weighted_mean_fixture();
    assert!(fx.onboard(&u).is_committed());
    let score = fx.ledger.read(|s| s.onboarded_issuers()[&did(&u)]).value();
    assert!((score - 0.55).abs() < 1e-12);
    let dev = key(9);
    fx.register_device(&u, &dev);
    let vc = fx.credential(&u, &did(&dev));
    let r = fx.submit(&u, Payload::Issue { credential: vc.clone() });
    assert!(r.is_committed(), "{r:?}");
    let status = fx.ledger.read(|s| s.credential(&vc.vc_id).map(|e| e.status));
    assert_eq!(status, Some(CredentialStatus::Active));
}

#[test]
fn issue_errors() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u, outsider) = (fx.m.clone(), key(2), key(4));
    fx.register_user(&u);
    fx.register_user(&outsider);
    let dev = key(9);
    fx.register_device(&u, &dev);

    let vc = fx.credential(&u, &did(&dev));
    assert_eq!(rejection(&fx.submit(&u, Payload::Issue { credential: vc })), Rejection::NotOnboarded);

    let vc = fx.credential(&m, &did(&dev));
    assert!(fx.submit(&m, Payload::Issue { credential: vc.clone() }).is_committed());
    let again = fx.tx(&m, Payload::Issue { credential: vc.clone() });
    assert_eq!(rejection(&fx.ledger.submit(again)), Rejection::DuplicateCredential);

    let stranger = key(30);
    let vc = fx.credential(&m, &did(&stranger));
    assert_eq!(rejection(&fx.submit(&m, Payload::Issue { credential: vc })), Rejection::UnknownHolder);

    let mut forged = fx.credential(&m, &did(&u));
    forged.signature = outsider.sign(&forged.signing_bytes().unwrap());
    assert_eq!(rejection(&fx.submit(&m, Payload::Issue { credential: forged })), Rejection::BadSignature);

    // Submitting someone else's credential is not allowed either.
    let vc = fx.credential(&m, &did(&u));
    assert_eq!(rejection(&fx.submit(&u, Payload::Issue { credential: vc })), Rejection::NotAuthorized);
}

#[test]
fn issue_rechecks_live_trust() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    fx.endorse(&m, &u, 0.9);
    assert!(fx.onboard(&u).is_committed());
    fx.endorse(&m, &u, 0.2);
    let vc = fx.credential(&u, &did(&u));
    assert_eq!(
        rejection(&fx.submit(&u, Payload::Issue { credential: vc })),
        Rejection::TrustBelowThreshold { score: 0.2, tau: 0.5 }
    );
}

#[test]
fn verify_outcomes_are_logged() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    let vc = fx.credential(&m, &did(&u));
    assert!(fx.submit(&m, Payload::Issue { credential: vc.clone() }).is_committed());

    let r = fx.submit(&u, Payload::Verify { vc_id: vc.vc_id, verifier: did(&u) });
    assert_eq!(r.outcome(), Some(VerifyOutcome::Valid));
    let unknown = crate::identity::Id16([7; 16]);
    let r = fx.submit(&u, Payload::Verify { vc_id: unknown, verifier: did(&u) });
    assert_eq!(r.outcome(), Some(VerifyOutcome::Invalid(InvalidReason::Unknown)));

    assert!(fx.revoke(&m, &vc, Rationale::Stolen).is_committed());
    let r = fx.submit(&u, Payload::Verify { vc_id: vc.vc_id, verifier: did(&u) });
    assert_eq!(r.outcome(), Some(VerifyOutcome::Invalid(InvalidReason::Revoked)));
    assert_eq!(fx.ledger.query(&vc.vc_id), VerifyOutcome::Invalid(InvalidReason::Revoked));

    let log = fx.ledger.read(|s| s.verification_log().iter().map(|e| e.outcome).collect::<Vec<_>>());
    assert_eq!(log.len(), 3);
}

#[test]
fn revoke_authority_and_absorption() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, owner, other) = (fx.m.clone(), key(2), key(3));
    fx.register_user(&owner);
    fx.register_user(&other);
    let dev = key(9);
    fx.register_device(&owner, &dev);
    let vc1 = fx.credential(&m, &did(&dev));
    let vc2 = fx.credential(&m, &did(&owner));
    fx.submit(&m, Payload::Issue { credential: vc1.clone() });
    fx.submit(&m, Payload::Issue { credential: vc2.clone() });

    assert_eq!(rejection(&fx.revoke(&other, &vc1, Rationale::Compromised)), Rejection::NotAuthorized);
    // The device owner may revoke its device's credential.
    assert!(fx.revoke(&owner, &vc1, Rationale::Stolen).is_committed());
    assert_eq!(rejection(&fx.revoke(&m, &vc1, Rationale::Stolen)), Rejection::AlreadyRevoked);
    // A user holding a credential is not its revoker unless it issued it.
    assert_eq!(rejection(&fx.revoke(&owner, &vc2, Rationale::Other("lost".into()))), Rejection::NotAuthorized);

    let mut missing = vc2.clone();
    missing.vc_id = crate::identity::Id16([1; 16]);
    assert_eq!(rejection(&fx.revoke(&m, &missing, Rationale::Stolen)), Rejection::UnknownCredential);
}

#[test]
fn bad_signature_leaves_state_unchanged() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let u = key(2);
    fx.register_user(&u);
    let before = fx.ledger.state_digest();
    let mut tx = fx.tx(&u, Payload::Register { record: IdentityRecord::user(&key(5).public()) });
    tx.signature = key(5).sign(&tx.signing_bytes().unwrap());
    assert_eq!(rejection(&fx.ledger.submit(tx)), Rejection::BadSignature);
    assert_eq!(fx.ledger.state_digest(), before);
    assert_eq!(fx.ledger.pending_len(), 1);
}

#[test]
fn tampered_tx_id_rejected() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let u = key(2);
    let mut tx = fx.tx(&u, Payload::Register { record: IdentityRecord::user(&u.public()) });
    tx.tx_id = crate::identity::Id16([0; 16]);
    assert!(matches!(rejection(&fx.ledger.submit(tx)), Rejection::Malformed(_)));
}

#[test]
fn batch_arithmetic() {
    let mut fx = Fx::new(2, Mode::Endorsement);
    for n in 10..13 {
        fx.register_user(&key(n));
    }
    assert_eq!(fx.ledger.height(), 1);
    assert_eq!(fx.ledger.pending_len(), 1);
    assert_eq!(fx.ledger.flush().unwrap(), Some(1));
    assert_eq!(fx.ledger.flush().unwrap(), None);
    assert_eq!(fx.ledger.height(), 2);
}

#[test]
fn baseline_mode_only_manufacturers_issue() {
    let mut fx = Fx::new(16, Mode::Baseline);
    let (m, u) = (fx.m.clone(), key(2));
    fx.register_user(&u);
    let endorsement = new_endorsement(&m, &did(&u), 0.9, 1).unwrap();
    assert_eq!(rejection(&fx.submit(&m, Payload::Endorse { endorsement })), Rejection::BaselineMode);
    let vc = fx.credential(&u, &did(&u));
    assert_eq!(rejection(&fx.submit(&u, Payload::Issue { credential: vc })), Rejection::NotOnboarded);
    let vc = fx.credential(&m, &did(&u));
    assert!(fx.submit(&m, Payload::Issue { credential: vc }).is_committed());
}

#[test]
fn transfer_requires_revocation_first() {
    let mut fx = Fx::new(16, Mode::Endorsement);
    let (m, a, b) = (fx.m.clone(), key(2), key(3));
    fx.register_user(&a);
    fx.register_user(&b);
    let dev = key(9);
    fx.register_device(&a, &dev);
    let vc = fx.credential(&m, &did(&dev));
    fx.submit(&m, Payload::Issue { credential: vc.clone() });

    let transfer = Payload::Transfer { device: did(&dev), new_owner: did(&b) };
    assert_eq!(rejection(&fx.submit(&b, transfer.clone())), Rejection::NotOwner);
    assert_eq!(rejection(&fx.submit(&a, transfer.clone())), Rejection::ActiveCredentialsRemain);
    assert!(fx.revoke(&a, &vc, Rationale::OwnershipTransfer).is_committed());
    assert!(fx.submit(&a, transfer).is_committed());
    let owner = fx.ledger.read(|s| s.identity(&did(&dev)).unwrap().owner.clone());
    assert_eq!(owner, Some(did(&b)));
}

#[test]
fn atomic_group_is_all_or_nothing() {
    let mut fx = Fx::new(4, Mode::Endorsement);
    let (m, a, b) = (fx.m.clone(), key(2), key(3));
    fx.register_user(&a);
    fx.register_user(&b);
    let dev = key(9);
    fx.register_device(&a, &dev);
    let vc = fx.credential(&m, &did(&dev));
    fx.submit(&m, Payload::Issue { credential: vc.clone() });
    let before = fx.ledger.state_digest();
    let committed_before = fx.ledger.counters().snapshot().committed;

    // Transfer before revocation fails, so the revocation is not kept either.
    let record = RevocationRecord { vc_id: vc.vc_id, rationale: Rationale::OwnershipTransfer, revoked_at: 50, revoker: did(&a) };
    let revoke = fx.tx(&a, Payload::Revoke { record });
    let transfer = fx.tx(&a, Payload::Transfer { device: did(&dev), new_owner: did(&b) });
    let err = fx.ledger.submit_atomic(vec![transfer.clone(), revoke.clone()]).unwrap_err();
    assert_eq!(err.rejection(), Some(&Rejection::ActiveCredentialsRemain));
    assert_eq!(fx.ledger.state_digest(), before);

    let receipts = fx.ledger.submit_atomic(vec![revoke, transfer]).unwrap();
    assert_eq!(receipts.len(), 2);
    assert_eq!(fx.ledger.counters().snapshot().committed, committed_before + 2);
    // The group never straddles a block boundary.
    fx.ledger.flush().unwrap();
    let chain = fx.ledger.chain();
    let last = chain.last().unwrap();
    assert!(last.transactions.iter().any(|t| t.kind() == TxKind::Transfer));
    assert!(last.transactions.iter().any(|t| t.kind() == TxKind::Revoke));
}

#[test]
fn atomic_group_capped_at_batch_limit() {
    let mut fx = Fx::new(2, Mode::Endorsement);
    let txs: Vec<_> =
        (10..13).map(key).map(|k| fx.tx(&k, Payload::Register { record: IdentityRecord::user(&k.public()) })).collect();
    let err = fx.ledger.submit_atomic(txs).unwrap_err();
    assert_eq!(err.rejection(), Some(&Rejection::GroupTooLarge(2)));
}

fn workload(fx: &mut Fx) {
    let (m, u) = weighted_mean_parts(fx);
    let dev = key(9);
    fx.register_device(&u, &dev);
    let vc = fx.credential(&u, &did(&dev));
    fx.submit(&u, Payload::Issue { credential: vc.clone() });
    fx.submit(&u, Payload::Verify { vc_id: vc.vc_id, verifier: did(&u) });
    fx.revoke(&m, &vc, Rationale::Compromised);
    fx.revoke(&u, &vc, Rationale::Stolen);
    fx.ledger.flush().unwrap();
}

fn weighted_mean_parts(fx: &mut Fx) -> (KeyPair, KeyPair) {
    let (m, a, u) = (fx.m.clone(), key(3), key(2));
    fx.register_user(&a);
    fx.register_user(&u);
    fx.endorse(&m, &a, 0.5);
    fx.endorse(&m, &u, 0.8);
    fx.endorse(&a, &u, 0.6);
    assert!(fx.onboard(&u).is_committed());
    (m, u)
}

#[test]
fn replay_reproduces_state() {
    let mut fx = Fx::new(3, Mode::Endorsement);
    workload(&mut fx);
    let replayed = replay(&fx.ledger.genesis(), &fx.ledger.chain()).unwrap();
    assert_eq!(replayed.canonical_bytes(), fx.ledger.state_snapshot().canonical_bytes());
}

#[test]
fn replay_of_empty_chain_is_genesis() {
    let fx = Fx::new(3, Mode::Endorsement);
    let state = replay(&fx.ledger.genesis(), &[]).unwrap();
    assert_eq!(state.identities().count(), 1);
    assert_eq!(state.credentials().count(), 0);
    assert_eq!(state.canonical_bytes(), fx.ledger.state_snapshot().canonical_bytes());
}

#[test]
fn chain_integrity_detects_tampering() {
    let mut fx = Fx::new(1, Mode::Endorsement);
    for n in 10..20 {
        fx.register_user(&key(n));
    }
    let chain = fx.ledger.chain();
    assert_eq!(chain.len(), 10);
    assert_eq!(verify_chain_integrity(&chain), ChainStatus::Intact);
    assert_eq!(verify_chain_integrity(&[]), ChainStatus::Intact);

    let mut tampered = chain.clone();
    tampered[4].transactions[0].timestamp += 1;
    assert_eq!(verify_chain_integrity(&tampered), ChainStatus::Broken(4));
    assert!(matches!(replay(&fx.ledger.genesis(), &tampered), Err(LedgerError::IntegrityViolation { height: 4, .. })));

    let mut relinked = chain.clone();
    relinked[6].prev_hash = Digest::ZERO;
    assert_eq!(verify_chain_integrity(&relinked), ChainStatus::Broken(6));
}

#[test]
fn file_round_trip_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    let mut fx = Fx::new(2, Mode::Endorsement);
    let genesis = fx.ledger.genesis();
    fx.ledger = Ledger::create_file(&path, genesis).unwrap();
    workload(&mut fx);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(audit(&bytes), AuditReport::Intact { blocks: fx.ledger.height() });

    let reopened = Ledger::open_file(&path).unwrap();
    assert_eq!(reopened.state_digest(), fx.ledger.state_digest());

    // Flipping the case of a hex digit keeps the JSON valid but is caught.
    let line_start = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    let pos = line_start + bytes[line_start..].windows(4).position(|w| w == b"\"fmt").unwrap();
    let hex_pos = pos + bytes[pos..].iter().position(|b| (b'a'..=b'f').contains(b)).unwrap();
    let mut tampered = bytes.clone();
    tampered[hex_pos] = tampered[hex_pos].to_ascii_uppercase();
    assert!(matches!(audit(&tampered), AuditReport::Broken { height: 0, .. }));

    let mut header = bytes.clone();
    header[3] ^= 1;
    assert!(matches!(audit(&header), AuditReport::HeaderCorrupt(_)));
}

#[test]
fn genesis_text_round_trip() {
    let fx = Fx::new(16, Mode::Baseline);
    let g = fx.ledger.genesis();
    assert_eq!(Genesis::parse(&g.to_text()).unwrap(), g);
    assert!(Genesis::parse(&g.to_text().replace("\"batch_limit\":16", "\"batch_limit\":0")).is_err());
}
