use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, CanonicalError};
use crate::crypto::{self, KeyPair, Signature};
use crate::identity::{Did, Endorsement, Id16, IdentityRecord, RevocationRecord, Timestamp, VcId, VerifiableCredential};
use crate::trust::{Threshold, TrustPath};

pub type TxId = Id16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Register,
    Endorse,
    DesignateProxy,
    Onboard,
    Issue,
    Verify,
    Revoke,
    Transfer,
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TxKind::Register => "register",
            TxKind::Endorse => "endorse",
            TxKind::DesignateProxy => "designate_proxy",
            TxKind::Onboard => "onboard",
            TxKind::Issue => "issue",
            TxKind::Verify => "verify",
            TxKind::Revoke => "revoke",
            TxKind::Transfer => "transfer",
        };
        f.write_str(s)
    }
}

/// Kind-specific transaction body.
///
/// `Onboard`, `Issue`, `Verify` and `Revoke` are the four registry
/// operations. The remaining kinds record the facts those operations depend
/// on (who exists, who endorses whom, who owns what) so that the registry
/// state is a pure function of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Register { record: IdentityRecord },
    Endorse { endorsement: Endorsement },
    DesignateProxy { manufacturer: Did, proxy: Did, min_trust: Threshold },
    Onboard { subject: IdentityRecord, linkage: TrustPath },
    Issue { credential: VerifiableCredential },
    Verify { vc_id: VcId, verifier: Did },
    Revoke { record: RevocationRecord },
    Transfer { device: Did, new_owner: Did },
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::Register { .. } => TxKind::Register,
            Payload::Endorse { .. } => TxKind::Endorse,
            Payload::DesignateProxy { .. } => TxKind::DesignateProxy,
            Payload::Onboard { .. } => TxKind::Onboard,
            Payload::Issue { .. } => TxKind::Issue,
            Payload::Verify { .. } => TxKind::Verify,
            Payload::Revoke { .. } => TxKind::Revoke,
            Payload::Transfer { .. } => TxKind::Transfer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub tx_id: TxId,
    pub submitter: Did,
    pub timestamp: Timestamp,
    pub payload: Payload,
    pub signature: Signature,
}

impl Transaction {
    /// Builds and signs a transaction. The id is derived from everything
    /// except the id itself and the signature.
    pub fn new(key: &KeyPair, payload: Payload, timestamp: Timestamp) -> Result<Self, CanonicalError> {
        let mut tx = Transaction {
            tx_id: Id16([0; 16]),
            submitter: Did::from_key(&key.public()),
            timestamp,
            payload,
            signature: Signature::ed25519([0; 64]),
        };
        tx.tx_id = tx.derive_id()?;
        tx.signature = key.sign(&tx.signing_bytes()?);
        Ok(tx)
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn derive_id(&self) -> Result<TxId, CanonicalError> {
        let bytes = canonical::to_bytes_excluding(self, &["tx_id", "signature"])?;
        Ok(Id16(crypto::digest(&bytes).truncated()))
    }

    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_bytes_excluding(self, &["signature"])
    }
}
