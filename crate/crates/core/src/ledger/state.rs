use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::tx::{Payload, Transaction, TxId};
use super::{Genesis, LedgerConfig, Mode};
use crate::crypto::{self, PublicKey};
use crate::identity::{Did, IdentityRecord, Record, RevocationRecord, Role, Timestamp, VcId, VerifiableCredential};
use crate::trust::{EdgeUpdate, TrustError, TrustGraph, TrustPath, TrustScore};

/// Why a transaction was refused. Rejected transactions never change state.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Rejection {
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("submitter {0} is not registered")]
    UnknownSubmitter(Did),
    #[error("bad signature")]
    BadSignature,
    #[error("transaction already committed")]
    DuplicateTransaction,
    #[error("{0} is already registered")]
    AlreadyRegistered(Did),
    #[error("{0} is not registered")]
    UnknownPrincipal(Did),
    #[error("operation not permitted: {0}")]
    NotPermitted(String),
    #[error("endorsement mechanisms are disabled in baseline mode")]
    BaselineMode,
    #[error("invalid endorsement")]
    InvalidEndorsement,
    #[error("an issuer cannot endorse itself")]
    SelfEndorsement,
    #[error("a newer endorsement for this pair exists")]
    StaleEndorsement,
    #[error("proxy trust {score} below required {required}")]
    ProxyTrustTooLow { score: f64, required: f64 },
    #[error("{0} is not a manufacturer")]
    NotAManufacturer(Did),
    #[error("trust linkage cannot be verified against the registry")]
    LinkageNotVerifiable,
    #[error("trust score {score} below threshold {tau}")]
    BelowThreshold { score: f64, tau: f64 },
    #[error("issuer is already onboarded")]
    AlreadyOnboarded,
    #[error("issuer is not onboarded")]
    NotOnboarded,
    #[error("issuer trust {score} is below threshold {tau}")]
    TrustBelowThreshold { score: f64, tau: f64 },
    #[error("holder is not registered")]
    UnknownHolder,
    #[error("credential already exists")]
    DuplicateCredential,
    #[error("unknown credential")]
    UnknownCredential,
    #[error("not authorized")]
    NotAuthorized,
    #[error("credential already revoked")]
    AlreadyRevoked,
    #[error("submitter does not own the device")]
    NotOwner,
    #[error("device still has active credentials")]
    ActiveCredentialsRemain,
    #[error("atomic group exceeds the batch limit of {0}")]
    GroupTooLarge(usize),
}

impl From<TrustError> for Rejection {
    fn from(e: TrustError) -> Self {
        match e {
            TrustError::InvalidEndorsement => Rejection::InvalidEndorsement,
            TrustError::SelfEndorsement => Rejection::SelfEndorsement,
            TrustError::UnknownPrincipal(d) => Rejection::UnknownPrincipal(d),
            TrustError::AlreadyRegistered(d) => Rejection::AlreadyRegistered(d),
            TrustError::ProxyTrustTooLow { score, required } => Rejection::ProxyTrustTooLow { score, required },
            TrustError::NotAManufacturer(d) => Rejection::NotAManufacturer(d),
            TrustError::NoTrustLinkage(_) => Rejection::LinkageNotVerifiable,
            other => Rejection::NotPermitted(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    Unknown,
    BadSignature,
    Revoked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result", content = "reason")]
pub enum VerifyOutcome {
    Valid,
    Invalid(InvalidReason),
}

impl VerifyOutcome {
    pub fn is_valid(self) -> bool {
        self == VerifyOutcome::Valid
    }
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyOutcome::Valid => f.write_str("valid"),
            VerifyOutcome::Invalid(r) => write!(f, "invalid ({r:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CredentialStatus {
    Active,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CredentialEntry {
    pub credential: VerifiableCredential,
    pub status: CredentialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationEvent {
    pub vc_id: VcId,
    pub verifier: Did,
    pub timestamp: Timestamp,
    pub outcome: VerifyOutcome,
}

/// Ledger-side work counters, used as platform-independent resource proxies.
#[derive(Debug, Default)]
pub struct OpCounters {
    sig_verifications: AtomicU64,
    hash_computations: AtomicU64,
    trust_evaluations: AtomicU64,
    committed: AtomicU64,
    rejected: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CounterSnapshot {
    pub sig_verifications: u64,
    pub hash_computations: u64,
    pub trust_evaluations: u64,
    pub committed: u64,
    pub rejected: u64,
}

impl CounterSnapshot {
    pub fn delta(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            sig_verifications: self.sig_verifications - earlier.sig_verifications,
            hash_computations: self.hash_computations - earlier.hash_computations,
            trust_evaluations: self.trust_evaluations - earlier.trust_evaluations,
            committed: self.committed - earlier.committed,
            rejected: self.rejected - earlier.rejected,
        }
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> [(&'static str, u64); 5] {
        [
            ("sig_verifications", self.sig_verifications),
            ("hash_computations", self.hash_computations),
            ("trust_evaluations", self.trust_evaluations),
            ("tx_committed", self.committed),
            ("tx_rejected", self.rejected),
        ]
    }
}

impl OpCounters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            sig_verifications: self.sig_verifications.load(Ordering::Relaxed),
            hash_computations: self.hash_computations.load(Ordering::Relaxed),
            trust_evaluations: self.trust_evaluations.load(Ordering::Relaxed),
            committed: self.committed.load(Ordering::Relaxed),
            rejected: self.rejected.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn verify(&self, message: &[u8], sig: &crypto::Signature, key: &PublicKey) -> bool {
        self.sig_verifications.fetch_add(1, Ordering::Relaxed);
        crypto::verify_signature(message, sig, key)
    }

    pub(crate) fn hashed(&self) {
        self.hash_computations.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn trust_evaluated(&self) {
        self.trust_evaluations.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn outcome(&self, committed: bool) {
        let c = if committed { &self.committed } else { &self.rejected };
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// The materialized registry: a pure fold of the committed transactions over
/// the genesis configuration.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerState {
    config: LedgerConfig,
    identities: BTreeMap<Did, IdentityRecord>,
    onboarded_issuers: BTreeMap<Did, TrustScore>,
    credentials: BTreeMap<VcId, CredentialEntry>,
    revocations: BTreeMap<VcId, RevocationRecord>,
    endorsements: TrustGraph,
    verification_log: Vec<VerificationEvent>,
    #[serde(skip)]
    seen_tx: HashSet<TxId>,
    #[serde(skip)]
    by_holder: BTreeMap<Did, BTreeSet<VcId>>,
}

impl LedgerState {
    pub fn genesis(genesis: &Genesis) -> Self {
        let mut state = LedgerState {
            config: genesis.config(),
            identities: BTreeMap::new(),
            onboarded_issuers: BTreeMap::new(),
            credentials: BTreeMap::new(),
            revocations: BTreeMap::new(),
            endorsements: TrustGraph::new(),
            verification_log: Vec::new(),
            seen_tx: HashSet::new(),
            by_holder: BTreeMap::new(),
        };
        for m in &genesis.manufacturers {
            let record = IdentityRecord::manufacturer(&m.verification_key);
            // Genesis is validated on load, so duplicates cannot occur here.
            let _ = state.endorsements.add_node(record.did.clone(), Role::Manufacturer);
            state.identities.insert(record.did.clone(), record);
        }
        state
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn identity(&self, did: &Did) -> Option<&IdentityRecord> {
        self.identities.get(did)
    }

    pub fn identities(&self) -> impl Iterator<Item = &IdentityRecord> {
        self.identities.values()
    }

    pub fn is_onboarded(&self, did: &Did) -> bool {
        self.onboarded_issuers.contains_key(did)
    }

    pub fn onboarded_issuers(&self) -> &BTreeMap<Did, TrustScore> {
        &self.onboarded_issuers
    }

    pub fn credential(&self, vc_id: &VcId) -> Option<&CredentialEntry> {
        self.credentials.get(vc_id)
    }

    pub fn credentials(&self) -> impl Iterator<Item = &CredentialEntry> {
        self.credentials.values()
    }

    /// Credentials held by `holder`, any status.
    pub fn credentials_held_by<'a>(&'a self, holder: &Did) -> impl Iterator<Item = &'a CredentialEntry> + 'a {
        self.by_holder
            .get(holder)
            .into_iter()
            .flat_map(move |ids| ids.iter().map(move |id| &self.credentials[id]))
    }

    pub fn revocation(&self, vc_id: &VcId) -> Option<&RevocationRecord> {
        self.revocations.get(vc_id)
    }

    pub fn trust_graph(&self) -> &TrustGraph {
        &self.endorsements
    }

    pub fn verification_log(&self) -> &[VerificationEvent] {
        &self.verification_log
    }

    pub fn is_manufacturer(&self, did: &Did) -> bool {
        self.identities.get(did).is_some_and(|r| r.role == Role::Manufacturer)
    }

    /// Canonical encoding of the whole state.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        crate::canonical::to_bytes(self).expect("ledger state is always encodable")
    }

    pub fn digest(&self) -> crypto::Digest {
        crypto::digest(&self.canonical_bytes())
    }

    /// Read-only verification used by authentication flows; not logged.
    pub fn check_credential(&self, vc_id: &VcId, counters: &OpCounters) -> VerifyOutcome {
        let Some(entry) = self.credentials.get(vc_id) else {
            return VerifyOutcome::Invalid(InvalidReason::Unknown);
        };
        let vc = &entry.credential;
        let signed = match (self.identities.get(&vc.issuer), vc.signing_bytes()) {
            (Some(issuer), Ok(msg)) => counters.verify(&msg, &vc.signature, &issuer.verification_key),
            _ => false,
        };
        if !signed {
            VerifyOutcome::Invalid(InvalidReason::BadSignature)
        } else if entry.status == CredentialStatus::Revoked {
            VerifyOutcome::Invalid(InvalidReason::Revoked)
        } else {
            VerifyOutcome::Valid
        }
    }

    fn trust_of(&self, did: &Did, counters: &OpCounters) -> TrustScore {
        counters.trust_evaluated();
        self.endorsements.trust_score(did)
    }

    /// Validates `tx` against the current state and applies it. On error the
    /// state is untouched.
    pub fn apply(&mut self, tx: &Transaction, counters: &OpCounters) -> Result<Option<VerifyOutcome>, Rejection> {
        counters.hashed();
        let derived = tx.derive_id().map_err(|e| Rejection::Malformed(e.to_string()))?;
        if derived != tx.tx_id {
            return Err(Rejection::Malformed("transaction id does not match contents".into()));
        }
        let submitter_key = self.submitter_key(tx)?;
        let msg = tx.signing_bytes().map_err(|e| Rejection::Malformed(e.to_string()))?;
        if !counters.verify(&msg, &tx.signature, &submitter_key) {
            return Err(Rejection::BadSignature);
        }
        if self.seen_tx.contains(&tx.tx_id) {
            return Err(Rejection::DuplicateTransaction);
        }

        let submitter = &tx.submitter;
        let outcome = match &tx.payload {
            Payload::Register { record } => self.apply_register(record, submitter).map(|_| None),
            Payload::Endorse { endorsement } => {
                self.require_endorsement_mode()?;
                if &endorsement.endorser != submitter {
                    return Err(Rejection::NotAuthorized);
                }
                counters.sig_verifications.fetch_add(1, Ordering::Relaxed);
                match self.endorsements.add_endorsement(endorsement.clone(), &submitter_key)? {
                    EdgeUpdate::Stale => Err(Rejection::StaleEndorsement),
                    _ => Ok(None),
                }
            }
            Payload::DesignateProxy { manufacturer, proxy, min_trust } => {
                self.require_endorsement_mode()?;
                if manufacturer != submitter {
                    return Err(Rejection::NotAuthorized);
                }
                counters.trust_evaluated();
                self.endorsements.designate_proxy(manufacturer, proxy, *min_trust)?;
                Ok(None)
            }
            Payload::Onboard { subject, linkage } => self.apply_onboard(subject, linkage, submitter, counters).map(|_| None),
            Payload::Issue { credential } => self.apply_issue(credential, submitter, counters).map(|_| None),
            Payload::Verify { vc_id, verifier } => {
                if verifier != submitter {
                    return Err(Rejection::NotAuthorized);
                }
                Ok(Some(self.apply_verify(vc_id, verifier, tx.timestamp, counters)))
            }
            Payload::Revoke { record } => self.apply_revoke(record, submitter).map(|_| None),
            Payload::Transfer { device, new_owner } => self.apply_transfer(device, new_owner, submitter).map(|_| None),
        }?;
        self.seen_tx.insert(tx.tx_id);
        Ok(outcome)
    }

    fn submitter_key(&self, tx: &Transaction) -> Result<PublicKey, Rejection> {
        if let Some(rec) = self.identities.get(&tx.submitter) {
            return Ok(rec.verification_key);
        }
        // Users register themselves, so the key comes from the payload.
        match &tx.payload {
            Payload::Register { record } if record.did == tx.submitter && record.did.matches_key(&record.verification_key) => {
                Ok(record.verification_key)
            }
            _ => Err(Rejection::UnknownSubmitter(tx.submitter.clone())),
        }
    }

    fn require_endorsement_mode(&self) -> Result<(), Rejection> {
        match self.config.mode {
            Mode::Endorsement => Ok(()),
            Mode::Baseline => Err(Rejection::BaselineMode),
        }
    }

    fn apply_register(&mut self, record: &IdentityRecord, submitter: &Did) -> Result<(), Rejection> {
        record.validate().map_err(|e| Rejection::Malformed(e.to_string()))?;
        if self.identities.contains_key(&record.did) {
            return Err(Rejection::AlreadyRegistered(record.did.clone()));
        }
        match record.role {
            Role::Manufacturer => return Err(Rejection::NotPermitted("manufacturers are fixed at genesis".into())),
            Role::User if &record.did != submitter => return Err(Rejection::NotAuthorized),
            Role::User => self.endorsements.add_node(record.did.clone(), Role::User)?,
            Role::Device => {
                let owner = record.owner.as_ref().expect("validated device record has an owner");
                if owner != submitter {
                    return Err(Rejection::NotAuthorized);
                }
                if self.identities.get(owner).map(|r| r.role) != Some(Role::User) {
                    return Err(Rejection::UnknownPrincipal(owner.clone()));
                }
            }
        }
        self.identities.insert(record.did.clone(), record.clone());
        Ok(())
    }

    /// Admits an issuer after re-verifying its claimed linkage and
    /// recomputing its score from the registry's own graph.
    fn apply_onboard(
        &mut self,
        subject: &IdentityRecord,
        linkage: &TrustPath,
        submitter: &Did,
        counters: &OpCounters,
    ) -> Result<(), Rejection> {
        self.require_endorsement_mode()?;
        if &subject.did != submitter {
            return Err(Rejection::NotAuthorized);
        }
        match self.identities.get(&subject.did) {
            Some(registered) if registered == subject => {}
            Some(_) => return Err(Rejection::Malformed("subject record differs from the registered one".into())),
            None => return Err(Rejection::UnknownPrincipal(subject.did.clone())),
        }
        if subject.role != Role::User {
            return Err(Rejection::NotPermitted("only users are onboarded as issuers".into()));
        }
        if self.onboarded_issuers.contains_key(&subject.did) {
            return Err(Rejection::AlreadyOnboarded);
        }
        self.endorsements
            .verify_linkage(linkage, &subject.did)
            .map_err(|_| Rejection::LinkageNotVerifiable)?;
        for hop in linkage.chain.windows(2) {
            let e = self.endorsements.endorsement(&hop[0], &hop[1]).ok_or(Rejection::LinkageNotVerifiable)?;
            let key = self.identities[&hop[0]].verification_key;
            let msg = e.signing_bytes().map_err(|e| Rejection::Malformed(e.to_string()))?;
            if !counters.verify(&msg, &e.signature, &key) {
                return Err(Rejection::LinkageNotVerifiable);
            }
        }
        let score = self.trust_of(&subject.did, counters);
        let tau = self.config.tau;
        if !tau.admits(score) {
            return Err(Rejection::BelowThreshold { score: score.value(), tau: tau.tau() });
        }
        self.onboarded_issuers.insert(subject.did.clone(), score);
        Ok(())
    }

    fn apply_issue(&mut self, vc: &VerifiableCredential, submitter: &Did, counters: &OpCounters) -> Result<(), Rejection> {
        if &vc.issuer != submitter {
            return Err(Rejection::NotAuthorized);
        }
        vc.validate().map_err(|e| Rejection::Malformed(e.to_string()))?;
        counters.hashed();
        if vc.derive_id().map_err(|e| Rejection::Malformed(e.to_string()))? != vc.vc_id {
            return Err(Rejection::Malformed("credential id does not match contents".into()));
        }
        if !self.is_manufacturer(&vc.issuer) {
            match self.config.mode {
                Mode::Baseline => return Err(Rejection::NotOnboarded),
                Mode::Endorsement => {
                    if !self.onboarded_issuers.contains_key(&vc.issuer) {
                        return Err(Rejection::NotOnboarded);
                    }
                    let score = self.trust_of(&vc.issuer, counters);
                    if !self.config.tau.admits(score) {
                        return Err(Rejection::TrustBelowThreshold { score: score.value(), tau: self.config.tau.tau() });
                    }
                }
            }
        }
        if !self.identities.contains_key(&vc.holder) {
            return Err(Rejection::UnknownHolder);
        }
        if self.credentials.contains_key(&vc.vc_id) {
            return Err(Rejection::DuplicateCredential);
        }
        let issuer_key = self.identities[&vc.issuer].verification_key;
        let msg = vc.signing_bytes().map_err(|e| Rejection::Malformed(e.to_string()))?;
        if !counters.verify(&msg, &vc.signature, &issuer_key) {
            return Err(Rejection::BadSignature);
        }
        self.by_holder.entry(vc.holder.clone()).or_default().insert(vc.vc_id);
        self.credentials
            .insert(vc.vc_id, CredentialEntry { credential: vc.clone(), status: CredentialStatus::Active });
        Ok(())
    }

    fn apply_verify(&mut self, vc_id: &VcId, verifier: &Did, at: Timestamp, counters: &OpCounters) -> VerifyOutcome {
        let outcome = self.check_credential(vc_id, counters);
        self.verification_log.push(VerificationEvent { vc_id: *vc_id, verifier: verifier.clone(), timestamp: at, outcome });
        outcome
    }

    /// The issuer, or the owner of the device holding the credential, may
    /// revoke it. Revocation is permanent.
    fn apply_revoke(&mut self, record: &RevocationRecord, submitter: &Did) -> Result<(), Rejection> {
        record.validate().map_err(|e| Rejection::Malformed(e.to_string()))?;
        if &record.revoker != submitter {
            return Err(Rejection::NotAuthorized);
        }
        let entry = self.credentials.get(&record.vc_id).ok_or(Rejection::UnknownCredential)?;
        let holder_owner = self.identities.get(&entry.credential.holder).and_then(|h| h.owner.as_ref());
        if entry.credential.issuer != record.revoker && holder_owner != Some(&record.revoker) {
            return Err(Rejection::NotAuthorized);
        }
        if entry.status == CredentialStatus::Revoked {
            return Err(Rejection::AlreadyRevoked);
        }
        self.credentials.get_mut(&record.vc_id).expect("checked above").status = CredentialStatus::Revoked;
        self.revocations.insert(record.vc_id, record.clone());
        Ok(())
    }

    /// Re-points a device at a new owner. The device must hold no active
    /// credentials, so a transfer is always preceded by revocations.
    fn apply_transfer(&mut self, device: &Did, new_owner: &Did, submitter: &Did) -> Result<(), Rejection> {
        let record = self.identities.get(device).ok_or_else(|| Rejection::UnknownPrincipal(device.clone()))?;
        if record.role != Role::Device {
            return Err(Rejection::NotPermitted("only devices change owners".into()));
        }
        if record.owner.as_ref() != Some(submitter) {
            return Err(Rejection::NotOwner);
        }
        if self.identities.get(new_owner).map(|r| r.role) != Some(Role::User) {
            return Err(Rejection::UnknownPrincipal(new_owner.clone()));
        }
        if new_owner == submitter {
            return Err(Rejection::NotPermitted("device already belongs to the new owner".into()));
        }
        if self.credentials_held_by(device).any(|e| e.status == CredentialStatus::Active) {
            return Err(Rejection::ActiveCredentialsRemain);
        }
        self.identities.get_mut(device).expect("checked above").owner = Some(new_owner.clone());
        Ok(())
    }
}
