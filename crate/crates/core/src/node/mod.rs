//! End-to-end flows over a shared [`Ledger`]: registration, issuer
//! onboarding, device credentialing, challenge-response authentication,
//! weak-device delegation, ownership transfer and revocation.
//!
//! A [`Node`] is cheap to share between threads. Every state change is a
//! ledger transaction; authentication only reads the ledger.

mod clock;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use clock::{Clock, LogicalClock, SystemClock};

use crate::canonical::{self, CanonicalError};
use crate::crypto::{KeyPair, PublicKey, Signature};
use crate::identity::{
    new_credential, new_endorsement, Claim, DeviceType, Did, IdentityError, IdentityRecord, Rationale,
    RevocationRecord, Role, Timestamp, VcId, VerifiableCredential, HOLDER_CLAIM,
};
use crate::ledger::{
    CredentialStatus, InvalidReason, Ledger, LedgerState, Mode, Payload, Receipt, Rejection, Transaction, TxId,
    VerifyOutcome,
};
use crate::trust::{Threshold, TrustError, TrustScore};

/// Default lifetime of an authentication challenge.
pub const DEFAULT_EXPIRY_MS: u64 = 30_000;
/// Claim key marking a credential as a weak-device binding.
pub const BINDS_CLAIM: &str = "binds";
/// Claim key naming the owner on credentials issued at transfer time.
pub const OWNER_CLAIM: &str = "owner";

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("ledger rejected the transaction: {0}")]
    Rejected(Rejection),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("{0} is not registered")]
    UnknownPrincipal(Did),
    #[error("key does not belong to {0}")]
    KeyMismatch(Did),
    #[error("device types do not allow this binding")]
    TypeMismatch,
    #[error("signer does not own the device")]
    NotOwner,
    #[error("new owner is neither onboarded nor onboardable")]
    NewOwnerNotOnboarded,
}

impl From<Rejection> for NodeError {
    fn from(r: Rejection) -> Self {
        NodeError::Rejected(r)
    }
}

/// Why an authentication attempt failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AuthReject {
    #[error("challenge expired or already used")]
    Expired,
    #[error("challenge response signature does not verify")]
    BadNonceSignature,
    #[error("credential holder does not match the responder")]
    HolderMismatch,
    #[error("credential is not valid on the ledger ({0:?})")]
    CredentialInvalid(InvalidReason),
    #[error("weak device is not bound to this strong device")]
    UnboundDevice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthenticationChallenge {
    #[serde(with = "hex::serde")]
    pub nonce: [u8; 32],
    pub verifier: Did,
    pub issued_at: Timestamp,
    pub expiry_ms: u64,
}

impl AuthenticationChallenge {
    fn expired_at(&self, now: Timestamp) -> bool {
        now > self.issued_at.saturating_add(self.expiry_ms)
    }
}

/// The signed answer to a challenge. `on_behalf_of` names the weak device
/// when a strong device answers for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthResponse {
    pub challenge: AuthenticationChallenge,
    pub responder: Did,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_behalf_of: Option<Did>,
    pub signature: Signature,
}

impl AuthResponse {
    pub fn sign(
        key: &KeyPair,
        challenge: &AuthenticationChallenge,
        on_behalf_of: Option<Did>,
    ) -> Result<Self, CanonicalError> {
        let mut r = AuthResponse {
            challenge: challenge.clone(),
            responder: Did::from_key(&key.public()),
            on_behalf_of,
            signature: Signature::ed25519([0; 64]),
        };
        r.signature = key.sign(&r.signing_bytes()?);
        Ok(r)
    }

    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_bytes_excluding(self, &["signature"])
    }

    fn verifies(&self, key: &PublicKey) -> bool {
        self.signing_bytes().is_ok_and(|m| crate::crypto::verify_signature(&m, &self.signature, key))
    }
}

/// An owner's statement that `weak` delegates to `strong`. On the ledger it
/// exists as an owner-issued credential held by `strong` with claim
/// `binds = weak`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceBinding {
    pub strong: Did,
    pub weak: Did,
    pub owner: Did,
    pub bound_at: Timestamp,
    pub signature: Signature,
}

impl DeviceBinding {
    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_bytes_excluding(self, &["signature"])
    }
}

pub struct Node {
    ledger: Arc<Ledger>,
    clock: Arc<dyn Clock>,
    expiry_ms: u64,
    nonces: Mutex<HashMap<[u8; 32], Timestamp>>,
    rng: Mutex<ChaCha20Rng>,
}

impl Node {
    pub fn new(ledger: Arc<Ledger>) -> Self {
        Node::with_parts(ledger, Arc::new(SystemClock), ChaCha20Rng::from_entropy())
    }

    /// A node whose nonces and timestamps are fully determined by `seed`
    /// and `clock`.
    pub fn deterministic(ledger: Arc<Ledger>, clock: Arc<dyn Clock>, seed: u64) -> Self {
        Node::with_parts(ledger, clock, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_parts(ledger: Arc<Ledger>, clock: Arc<dyn Clock>, rng: ChaCha20Rng) -> Self {
        Node { ledger, clock, expiry_ms: DEFAULT_EXPIRY_MS, nonces: Mutex::new(HashMap::new()), rng: Mutex::new(rng) }
    }

    pub fn with_expiry(mut self, expiry_ms: u64) -> Self {
        assert!(expiry_ms > 0, "challenge expiry must be positive");
        self.expiry_ms = expiry_ms;
        self
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now_ms()
    }

    fn submit(&self, key: &KeyPair, payload: Payload) -> Result<Receipt, NodeError> {
        let tx = Transaction::new(key, payload, self.now())?;
        match self.ledger.submit(tx) {
            Receipt::Rejected { reason, .. } => Err(NodeError::Rejected(reason)),
            committed => Ok(committed),
        }
    }

    fn record(&self, did: &Did) -> Result<IdentityRecord, NodeError> {
        self.ledger.read(|s| s.identity(did).cloned()).ok_or_else(|| NodeError::UnknownPrincipal(did.clone()))
    }

    fn key_record(&self, key: &KeyPair) -> Result<IdentityRecord, NodeError> {
        self.record(&Did::from_key(&key.public()))
    }

    pub fn register_user(&self, key: &KeyPair) -> Result<IdentityRecord, NodeError> {
        let record = IdentityRecord::user(&key.public());
        self.submit(key, Payload::Register { record: record.clone() })?;
        Ok(record)
    }

    pub fn register_device(
        &self,
        owner_key: &KeyPair,
        device_key: &PublicKey,
        device_type: DeviceType,
    ) -> Result<IdentityRecord, NodeError> {
        let record = IdentityRecord::device(device_key, device_type, Did::from_key(&owner_key.public()));
        self.submit(owner_key, Payload::Register { record: record.clone() })?;
        Ok(record)
    }

    pub fn endorse(&self, key: &KeyPair, subject: &Did, score: f64) -> Result<TxId, NodeError> {
        let endorsement = new_endorsement(key, subject, score, self.now())?;
        Ok(self.submit(key, Payload::Endorse { endorsement })?.tx_id())
    }

    pub fn designate_proxy(&self, manufacturer_key: &KeyPair, proxy: &Did, min_trust: Threshold) -> Result<TxId, NodeError> {
        let manufacturer = Did::from_key(&manufacturer_key.public());
        Ok(self.submit(manufacturer_key, Payload::DesignateProxy { manufacturer, proxy: proxy.clone(), min_trust })?.tx_id())
    }

    /// Finds the user's trust linkage and submits an onboard transaction.
    /// Returns the score the ledger recorded at admission.
    pub fn onboard_issuer(&self, user: &IdentityRecord, user_key: &KeyPair) -> Result<TrustScore, NodeError> {
        if user_key.public() != user.verification_key {
            return Err(NodeError::KeyMismatch(user.did.clone()));
        }
        let linkage = self.ledger.read(|s| s.trust_graph().find_trust_linkage(&user.did))?;
        self.submit(user_key, Payload::Onboard { subject: user.clone(), linkage })?;
        Ok(self.ledger.read(|s| s.onboarded_issuers()[&user.did]))
    }

    pub fn issue_device_credential(
        &self,
        issuer_key: &KeyPair,
        device: &IdentityRecord,
        claims: Vec<Claim>,
    ) -> Result<VerifiableCredential, NodeError> {
        let issuer = self.key_record(issuer_key)?;
        let vc = new_credential(&issuer, issuer_key, &device.did, claims, self.now())?;
        self.submit(issuer_key, Payload::Issue { credential: vc.clone() })?;
        Ok(vc)
    }

    /// Submits a logged verification and returns its outcome.
    pub fn verify_on_ledger(&self, verifier_key: &KeyPair, vc_id: &VcId) -> Result<VerifyOutcome, NodeError> {
        let verifier = Did::from_key(&verifier_key.public());
        let receipt = self.submit(verifier_key, Payload::Verify { vc_id: *vc_id, verifier })?;
        Ok(receipt.outcome().expect("committed verify carries an outcome"))
    }

    pub fn revoke_credential(&self, key: &KeyPair, vc_id: &VcId, rationale: Rationale) -> Result<TxId, NodeError> {
        let record =
            RevocationRecord { vc_id: *vc_id, rationale, revoked_at: self.now(), revoker: Did::from_key(&key.public()) };
        Ok(self.submit(key, Payload::Revoke { record })?.tx_id())
    }

    /// Issues a fresh single-use challenge.
    pub fn challenge(&self, verifier: &Did) -> AuthenticationChallenge {
        let mut nonce = [0u8; 32];
        self.rng.lock().fill_bytes(&mut nonce);
        let c = AuthenticationChallenge { nonce, verifier: verifier.clone(), issued_at: self.now(), expiry_ms: self.expiry_ms };
        self.nonces.lock().insert(nonce, c.issued_at);
        c
    }

    /// Removes the nonce and checks that the challenge was live. The nonce is
    /// spent whatever the outcome.
    fn consume(&self, challenge: &AuthenticationChallenge) -> Result<(), AuthReject> {
        let issued = self.nonces.lock().remove(&challenge.nonce);
        match issued {
            Some(at) if at == challenge.issued_at && !challenge.expired_at(self.now()) => Ok(()),
            _ => Err(AuthReject::Expired),
        }
    }

    /// Holder side followed by verifier side of challenge-response.
    pub fn authenticate(
        &self,
        holder_key: &KeyPair,
        vc: &VerifiableCredential,
        challenge: &AuthenticationChallenge,
    ) -> Result<(), AuthReject> {
        let response = AuthResponse::sign(holder_key, challenge, None).map_err(|_| AuthReject::BadNonceSignature)?;
        self.verify_response(&response, vc)
    }

    /// Verifier side: checks a response against the ledger's fast query path.
    pub fn verify_response(&self, response: &AuthResponse, vc: &VerifiableCredential) -> Result<(), AuthReject> {
        self.consume(&response.challenge)?;
        if response.on_behalf_of.is_some() {
            return Err(AuthReject::UnboundDevice);
        }
        self.ledger.read(|s| {
            let key = s.identity(&response.responder).map(|r| r.verification_key);
            if !key.is_some_and(|k| response.verifies(&k)) {
                return Err(AuthReject::BadNonceSignature);
            }
            if vc.holder != response.responder {
                return Err(AuthReject::HolderMismatch);
            }
            credential_valid(s, vc, self.ledger.counters())
        })
    }

    /// Records that `weak` delegates to `strong`. Both must be owned by the
    /// signer.
    pub fn bind_weak_device(
        &self,
        owner_key: &KeyPair,
        strong: &IdentityRecord,
        weak: &IdentityRecord,
    ) -> Result<DeviceBinding, NodeError> {
        let owner = Did::from_key(&owner_key.public());
        let (strong_now, weak_now) = (self.record(&strong.did)?, self.record(&weak.did)?);
        if strong_now.device_type != Some(DeviceType::Strong) || weak_now.device_type != Some(DeviceType::Weak) {
            return Err(NodeError::TypeMismatch);
        }
        if strong_now.owner.as_ref() != Some(&owner) || weak_now.owner.as_ref() != Some(&owner) {
            return Err(NodeError::NotOwner);
        }
        let claims = vec![Claim::new(BINDS_CLAIM, weak.did.to_string())];
        self.issue_device_credential(owner_key, &strong_now, claims)?;
        let mut binding = DeviceBinding {
            strong: strong.did.clone(),
            weak: weak.did.clone(),
            owner,
            bound_at: self.now(),
            signature: Signature::ed25519([0; 64]),
        };
        binding.signature = owner_key.sign(&binding.signing_bytes()?);
        Ok(binding)
    }

    /// Revokes the credential backing `binding`.
    pub fn unbind(&self, owner_key: &KeyPair, binding: &DeviceBinding) -> Result<TxId, NodeError> {
        let vc_id = self
            .ledger
            .read(|s| binding_credential(s, binding).map(|vc| vc.vc_id))
            .ok_or(NodeError::Rejected(Rejection::UnknownCredential))?;
        self.revoke_credential(owner_key, &vc_id, Rationale::Other("unbind".into()))
    }

    /// The strong device answers a challenge for a bound weak device.
    pub fn delegated_authenticate(
        &self,
        strong_key: &KeyPair,
        binding: &DeviceBinding,
        weak_vc: &VerifiableCredential,
        challenge: &AuthenticationChallenge,
    ) -> Result<(), AuthReject> {
        let response = AuthResponse::sign(strong_key, challenge, Some(binding.weak.clone()))
            .map_err(|_| AuthReject::BadNonceSignature)?;
        self.verify_delegated_response(&response, binding, weak_vc)
    }

    pub fn verify_delegated_response(
        &self,
        response: &AuthResponse,
        binding: &DeviceBinding,
        weak_vc: &VerifiableCredential,
    ) -> Result<(), AuthReject> {
        self.consume(&response.challenge)?;
        self.ledger.read(|s| {
            let bound = response.responder == binding.strong
                && response.on_behalf_of.as_ref() == Some(&binding.weak)
                && weak_vc.holder == binding.weak
                && binding_is_live(s, binding);
            if !bound {
                return Err(AuthReject::UnboundDevice);
            }
            credential_valid(s, weak_vc, self.ledger.counters())?;
            let key = s.identity(&response.responder).map(|r| r.verification_key);
            if !key.is_some_and(|k| response.verifies(&k)) {
                return Err(AuthReject::BadNonceSignature);
            }
            Ok(())
        })
    }

    /// Hands `device` to a new owner. All of the device's active credentials
    /// are revoked, the owner changes, and the new owner issues a fresh
    /// credential, in one atomic group. A new owner that is not yet an
    /// issuer is onboarded within the same group when its trust allows.
    pub fn transfer_ownership(
        &self,
        old_owner_key: &KeyPair,
        new_owner: &IdentityRecord,
        new_owner_key: &KeyPair,
        device: &IdentityRecord,
    ) -> Result<VerifiableCredential, NodeError> {
        if new_owner_key.public() != new_owner.verification_key {
            return Err(NodeError::KeyMismatch(new_owner.did.clone()));
        }
        let old_owner = Did::from_key(&old_owner_key.public());
        let device_now = self.record(&device.did)?;
        if device_now.owner.as_ref() != Some(&old_owner) {
            return Err(NodeError::NotOwner);
        }
        let now = self.now();
        let onboard = self.onboarding_tx(new_owner, new_owner_key, now)?;
        let onboarding = onboard.is_some();
        let (active, carried) = self.ledger.read(|s| {
            let mut active: Vec<&VerifiableCredential> = s
                .credentials_held_by(&device.did)
                .filter(|e| e.status == CredentialStatus::Active)
                .map(|e| &e.credential)
                .collect();
            active.sort_by_key(|vc| (vc.issued_at, vc.vc_id));
            // Descriptive claims carry over; later credentials win on conflicts.
            let carried: BTreeMap<&str, &str> = active
                .iter()
                .flat_map(|vc| vc.claims.iter())
                .filter(|c| ![HOLDER_CLAIM, OWNER_CLAIM, BINDS_CLAIM].contains(&c.key.as_str()))
                .map(|c| (c.key.as_str(), c.val.as_str()))
                .collect();
            let carried: Vec<Claim> = carried.into_iter().map(|(k, v)| Claim::new(k, v)).collect();
            (active.iter().map(|vc| vc.vc_id).collect::<Vec<_>>(), carried)
        });

        let mut group: Vec<Transaction> = onboard.into_iter().collect();
        for vc_id in active {
            let record = RevocationRecord { vc_id, rationale: Rationale::OwnershipTransfer, revoked_at: now, revoker: old_owner.clone() };
            group.push(Transaction::new(old_owner_key, Payload::Revoke { record }, now)?);
        }
        group.push(Transaction::new(
            old_owner_key,
            Payload::Transfer { device: device.did.clone(), new_owner: new_owner.did.clone() },
            now,
        )?);
        let mut claims = carried;
        claims.push(Claim::new(OWNER_CLAIM, new_owner.did.to_string()));
        let vc = new_credential(new_owner, new_owner_key, &device.did, claims, now)?;
        group.push(Transaction::new(new_owner_key, Payload::Issue { credential: vc.clone() }, now)?);

        match self.ledger.submit_atomic(group) {
            Ok(_) => Ok(vc),
            Err(receipt) => {
                let reason = receipt.rejection().cloned().expect("failed group carries a reason");
                if onboarding && matches!(reason, Rejection::BelowThreshold { .. } | Rejection::LinkageNotVerifiable) {
                    return Err(NodeError::NewOwnerNotOnboarded);
                }
                Err(NodeError::Rejected(reason))
            }
        }
    }

    /// The onboard transaction a new owner needs before it can issue, if any.
    fn onboarding_tx(&self, user: &IdentityRecord, key: &KeyPair, now: Timestamp) -> Result<Option<Transaction>, NodeError> {
        let (registered, onboarded, mode, decision) = self.ledger.read(|s| {
            let tau = s.config().tau;
            (
                s.identity(&user.did) == Some(user),
                s.is_onboarded(&user.did) || s.is_manufacturer(&user.did),
                s.config().mode,
                s.trust_graph().is_onboardable(&user.did, tau),
            )
        });
        if !registered {
            return Err(NodeError::UnknownPrincipal(user.did.clone()));
        }
        if onboarded {
            return Ok(None);
        }
        if mode == Mode::Baseline || !decision.admitted {
            return Err(NodeError::NewOwnerNotOnboarded);
        }
        let linkage = self.ledger.read(|s| s.trust_graph().find_trust_linkage(&user.did))?;
        Ok(Some(Transaction::new(key, Payload::Onboard { subject: user.clone(), linkage }, now)?))
    }
}

/// The presented credential must be exactly the one on the ledger, and the
/// ledger must consider it valid.
fn credential_valid(s: &LedgerState, vc: &VerifiableCredential, counters: &crate::ledger::OpCounters) -> Result<(), AuthReject> {
    match s.credential(&vc.vc_id) {
        Some(entry) if entry.credential == *vc => match s.check_credential(&vc.vc_id, counters) {
            VerifyOutcome::Valid => Ok(()),
            VerifyOutcome::Invalid(reason) => Err(AuthReject::CredentialInvalid(reason)),
        },
        Some(_) => Err(AuthReject::CredentialInvalid(InvalidReason::BadSignature)),
        None => Err(AuthReject::CredentialInvalid(InvalidReason::Unknown)),
    }
}

fn binding_credential<'a>(s: &'a LedgerState, binding: &DeviceBinding) -> Option<&'a VerifiableCredential> {
    let weak = binding.weak.to_string();
    s.credentials_held_by(&binding.strong)
        .filter(|e| e.status == CredentialStatus::Active)
        .map(|e| &e.credential)
        .find(|vc| vc.issuer == binding.owner && vc.claim(BINDS_CLAIM) == Some(weak.as_str()))
}

/// A binding holds while its owner still owns both devices, the owner's
/// signature verifies and the backing credential is active.
fn binding_is_live(s: &LedgerState, binding: &DeviceBinding) -> bool {
    let owned = |d: &Did, t: DeviceType| {
        s.identity(d).is_some_and(|r| r.role == Role::Device && r.device_type == Some(t) && r.owner.as_ref() == Some(&binding.owner))
    };
    let signed = s.identity(&binding.owner).is_some_and(|o| {
        binding.signing_bytes().is_ok_and(|m| crate::crypto::verify_signature(&m, &binding.signature, &o.verification_key))
    });
    signed && owned(&binding.strong, DeviceType::Strong) && owned(&binding.weak, DeviceType::Weak) && binding_credential(s, binding).is_some()
}
