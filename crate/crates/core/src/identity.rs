//! Principals, identifiers and the signed records they exchange.
//!
//! Three kinds of principal exist: manufacturers (the root of trust), users,
//! and devices. Devices are either strong (able to run the full protocol) or
//! weak (constrained, delegating to a strong device), and each device has
//! exactly one owning user.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical::{self, CanonicalError};
use crate::crypto::{self, KeyPair, PublicKey, Signature};

pub const DID_METHOD: &str = "ssivdr";
/// Claim key reserved for the holder's DID on every credential.
pub const HOLDER_CLAIM: &str = "holder_did";

/// Epoch milliseconds.
pub type Timestamp = u64;

#[derive(Debug, thiserror::Error)]
pub enum IdentityError {
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("duplicate claim key {0:?}")]
    DuplicateClaim(String),
    #[error("key pair does not match the identity record")]
    KeyMismatch,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// `did:ssivdr:<32 hex chars>`, where the suffix is the key id of the
/// principal's verification key.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Did {
    id: String,
}

impl Did {
    pub fn from_key(key: &PublicKey) -> Self {
        Did { id: key.key_id() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// True iff this DID is the self-certifying identifier of `key`.
    pub fn matches_key(&self, key: &PublicKey) -> bool {
        self.id == key.key_id()
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{DID_METHOD}:{}", self.id)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = s
            .strip_prefix("did:")
            .and_then(|rest| rest.strip_prefix(DID_METHOD))
            .and_then(|rest| rest.strip_prefix(':'))
            .ok_or_else(|| IdentityError::InvalidValue(format!("not a did:{DID_METHOD} identifier: {s:?}")))?;
        if id.len() != 32 || !id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(IdentityError::InvalidValue(format!("DID suffix must be 32 lowercase hex chars: {s:?}")));
        }
        Ok(Did { id: id.to_owned() })
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Manufacturer,
    User,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceType {
    Strong,
    Weak,
}

impl FromStr for DeviceType {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(DeviceType::Strong),
            "weak" => Ok(DeviceType::Weak),
            other => Err(IdentityError::InvalidValue(format!("unknown device type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityRecord {
    pub did: Did,
    pub role: Role,
    pub verification_key: PublicKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_type: Option<DeviceType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<Did>,
}

impl IdentityRecord {
    pub fn manufacturer(key: &PublicKey) -> Self {
        IdentityRecord { did: Did::from_key(key), role: Role::Manufacturer, verification_key: *key, device_type: None, owner: None }
    }

    pub fn user(key: &PublicKey) -> Self {
        IdentityRecord { did: Did::from_key(key), role: Role::User, verification_key: *key, device_type: None, owner: None }
    }

    pub fn device(key: &PublicKey, device_type: DeviceType, owner: Did) -> Self {
        IdentityRecord {
            did: Did::from_key(key),
            role: Role::Device,
            verification_key: *key,
            device_type: Some(device_type),
            owner: Some(owner),
        }
    }

    pub fn is_issuer_role(&self) -> bool {
        matches!(self.role, Role::Manufacturer | Role::User)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub key: String,
    pub val: String,
}

impl Claim {
    pub fn new(key: impl Into<String>, val: impl Into<String>) -> Self {
        Claim { key: key.into(), val: val.into() }
    }
}

/// 16-byte content-derived identifier, hex encoded on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Id16(pub [u8; 16]);

pub type VcId = Id16;

impl Id16 {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Id16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Id16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Id16 {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(IdentityError::InvalidValue(format!("identifier must be 32 lowercase hex chars: {s:?}")));
        }
        let mut out = [0u8; 16];
        hex::decode_to_slice(s, &mut out).map_err(|e| IdentityError::InvalidValue(e.to_string()))?;
        Ok(Id16(out))
    }
}

impl Serialize for Id16 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Id16 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn serialize_sorted_claims<S: Serializer>(claims: &[Claim], s: S) -> Result<S::Ok, S::Error> {
    let mut sorted: Vec<&Claim> = claims.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    s.collect_seq(sorted)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiableCredential {
    pub vc_id: VcId,
    pub issuer: Did,
    pub holder: Did,
    #[serde(serialize_with = "serialize_sorted_claims")]
    pub claims: Vec<Claim>,
    pub issued_at: Timestamp,
    pub signature: Signature,
}

impl VerifiableCredential {
    pub fn claim(&self, key: &str) -> Option<&str> {
        self.claims.iter().find(|c| c.key == key).map(|c| c.val.as_str())
    }

    /// Bytes covered by the issuer's signature.
    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_bytes_excluding(self, &["signature"])
    }

    /// Content digest from which `vc_id` is derived.
    pub fn derive_id(&self) -> Result<VcId, CanonicalError> {
        let bytes = canonical::to_bytes_excluding(self, &["vc_id", "signature"])?;
        Ok(Id16(crypto::digest(&bytes).truncated()))
    }

    pub fn verify(&self, issuer_key: &PublicKey) -> bool {
        self.signing_bytes()
            .map(|m| crypto::verify_signature(&m, &self.signature, issuer_key))
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endorsement {
    pub endorser: Did,
    pub subject: Did,
    pub score: f64,
    pub endorsed_at: Timestamp,
    pub signature: Signature,
}

impl Endorsement {
    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_bytes_excluding(self, &["signature"])
    }

    pub fn verify(&self, endorser_key: &PublicKey) -> bool {
        self.signing_bytes()
            .map(|m| crypto::verify_signature(&m, &self.signature, endorser_key))
            .unwrap_or(false)
    }
}

/// Why a credential was revoked.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rationale {
    Compromised,
    Stolen,
    OwnershipTransfer,
    Other(String),
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rationale::Compromised => f.write_str("compromised"),
            Rationale::Stolen => f.write_str("stolen"),
            Rationale::OwnershipTransfer => f.write_str("ownership_transfer"),
            Rationale::Other(text) => write!(f, "other:{text}"),
        }
    }
}

impl FromStr for Rationale {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "compromised" => Ok(Rationale::Compromised),
            "stolen" => Ok(Rationale::Stolen),
            "ownership_transfer" => Ok(Rationale::OwnershipTransfer),
            other => match other.strip_prefix("other:") {
                Some(text) if !text.is_empty() => Ok(Rationale::Other(text.to_owned())),
                _ => Err(IdentityError::InvalidValue(format!("unknown revocation rationale {other:?}"))),
            },
        }
    }
}

impl Serialize for Rationale {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rationale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationRecord {
    pub vc_id: VcId,
    pub rationale: Rationale,
    pub revoked_at: Timestamp,
    pub revoker: Did,
}

/// A record with structural invariants that must hold before it is encoded.
pub trait Record: Serialize + DeserializeOwned {
    fn validate(&self) -> Result<(), IdentityError>;
}

impl Record for IdentityRecord {
    fn validate(&self) -> Result<(), IdentityError> {
        if !self.did.matches_key(&self.verification_key) {
            return Err(IdentityError::InvalidValue("DID does not match verification key".into()));
        }
        match (self.role, self.device_type, &self.owner) {
            (Role::Device, Some(_), Some(_)) => Ok(()),
            (Role::Device, _, _) => Err(IdentityError::InvalidValue("device records need a type and an owner".into())),
            (_, None, None) => Ok(()),
            _ => Err(IdentityError::InvalidValue("only devices carry a type and an owner".into())),
        }
    }
}

impl Record for VerifiableCredential {
    fn validate(&self) -> Result<(), IdentityError> {
        check_claims(&self.claims)?;
        match self.claim(HOLDER_CLAIM) {
            Some(v) if v == self.holder.to_string() => {}
            _ => return Err(IdentityError::InvalidValue(format!("{HOLDER_CLAIM} claim must name the holder"))),
        }
        if self.signature.bytes.len() != 64 {
            return Err(IdentityError::InvalidValue("signature must be 64 bytes".into()));
        }
        Ok(())
    }
}

impl Record for Endorsement {
    fn validate(&self) -> Result<(), IdentityError> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(IdentityError::InvalidValue(format!("endorsement score {} outside [0,1]", self.score)));
        }
        if self.endorser == self.subject {
            return Err(IdentityError::InvalidValue("endorser and subject must differ".into()));
        }
        Ok(())
    }
}

impl Record for RevocationRecord {
    fn validate(&self) -> Result<(), IdentityError> {
        match &self.rationale {
            Rationale::Other(text) if text.is_empty() => Err(IdentityError::InvalidValue("empty rationale".into())),
            _ => Ok(()),
        }
    }
}

/// Canonical encoding of a validated record.
pub fn canonical_serialize<R: Record>(value: &R) -> Result<Vec<u8>, IdentityError> {
    value.validate()?;
    Ok(canonical::to_bytes(value)?)
}

/// Inverse of [`canonical_serialize`]; rejects records that violate their
/// invariants.
pub fn canonical_parse<R: Record>(bytes: &[u8]) -> Result<R, IdentityError> {
    let value: R = canonical::from_bytes(bytes)?;
    value.validate()?;
    Ok(value)
}

fn check_claims(claims: &[Claim]) -> Result<(), IdentityError> {
    if claims.is_empty() {
        return Err(IdentityError::InvalidValue("credential needs at least one claim".into()));
    }
    let mut keys: Vec<&str> = claims.iter().map(|c| c.key.as_str()).collect();
    keys.sort_unstable();
    if keys[0].is_empty() {
        return Err(IdentityError::InvalidValue("claim keys must be non-empty".into()));
    }
    if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
        return Err(IdentityError::DuplicateClaim(w[0].to_owned()));
    }
    Ok(())
}

/// Builds and signs a credential. The `holder_did` claim is added when the
/// caller did not supply it; claims are stored sorted by key.
pub fn new_credential(
    issuer_record: &IdentityRecord,
    issuer_key: &KeyPair,
    holder: &Did,
    claims: Vec<Claim>,
    now: Timestamp,
) -> Result<VerifiableCredential, IdentityError> {
    if issuer_key.public() != issuer_record.verification_key {
        return Err(IdentityError::KeyMismatch);
    }
    let mut claims = claims;
    let holder_text = holder.to_string();
    match claims.iter().find(|c| c.key == HOLDER_CLAIM) {
        Some(c) if c.val != holder_text => {
            return Err(IdentityError::InvalidValue(format!("{HOLDER_CLAIM} claim does not match the holder")))
        }
        Some(_) => {}
        None => claims.push(Claim::new(HOLDER_CLAIM, holder_text)),
    }
    check_claims(&claims)?;
    claims.sort_by(|a, b| a.key.cmp(&b.key));

    let mut vc = VerifiableCredential {
        vc_id: Id16([0; 16]),
        issuer: issuer_record.did.clone(),
        holder: holder.clone(),
        claims,
        issued_at: now,
        signature: Signature::ed25519([0; 64]),
    };
    vc.vc_id = vc.derive_id()?;
    vc.signature = issuer_key.sign(&vc.signing_bytes()?);
    Ok(vc)
}

pub fn new_endorsement(
    endorser_key: &KeyPair,
    subject: &Did,
    score: f64,
    now: Timestamp,
) -> Result<Endorsement, IdentityError> {
    let mut e = Endorsement {
        endorser: Did::from_key(&endorser_key.public()),
        subject: subject.clone(),
        score,
        endorsed_at: now,
        signature: Signature::ed25519([0; 64]),
    };
    e.validate()?;
    e.signature = endorser_key.sign(&e.signing_bytes()?);
    Ok(e)
}
