//! Signing and hashing primitives.
//!
//! Every signed artifact in the registry (credentials, endorsements,
//! transactions, device bindings) uses Ed25519 over its canonical
//! serialization. The hash chain and all content-derived identifiers use
//! SHA-256.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::Sha256;

/// Length of a key identifier in bytes (hex-encoded to 32 characters).
pub const KEY_ID_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("seed must be exactly 32 bytes, got {0}")]
    InvalidSeed(usize),
    #[error("malformed key material: {0}")]
    InvalidKey(String),
}

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Digest(out))
    }

    /// First `N` bytes of the digest, used for content-derived identifiers.
    pub fn truncated<const N: usize>(&self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.0[..N]);
        out
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("digest must be 64 lowercase hex chars"));
        }
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid digest hex"))
    }
}

/// SHA-256 of `data`.
pub fn digest(data: &[u8]) -> Digest {
    use sha2::Digest as _;
    Digest(Sha256::digest(data).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureScheme {
    Ed25519,
}

/// A detached signature. Always 64 bytes for Ed25519.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub scheme: SignatureScheme,
    #[serde(with = "hex::serde")]
    pub bytes: Vec<u8>,
}

impl Signature {
    pub fn ed25519(bytes: [u8; 64]) -> Self {
        Signature { scheme: SignatureScheme::Ed25519, bytes: bytes.to_vec() }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

/// Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Ok(PublicKey(out))
    }

    /// Stable handle for this key: hex of the first 16 bytes of its SHA-256.
    pub fn key_id(&self) -> String {
        hex::encode(digest(&self.0).truncated::<KEY_ID_LEN>())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("public key hex must be lowercase"));
        }
        PublicKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// An Ed25519 key pair with its derived key identifier.
#[derive(Clone)]
pub struct KeyPair {
    key_id: String,
    signing: SigningKey,
}

impl KeyPair {
    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature::ed25519(self.signing.sign(message).to_bytes())
    }

    fn from_signing(signing: SigningKey) -> Self {
        let public = PublicKey(signing.verifying_key().to_bytes());
        KeyPair { key_id: public.key_id(), signing }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

/// Derives a key pair from a 32-byte seed, or from the OS entropy source when
/// no seed is given.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair, CryptoError> {
    let signing = match seed {
        Some(seed) => {
            let seed: [u8; 32] = seed.try_into().map_err(|_| CryptoError::InvalidSeed(seed.len()))?;
            SigningKey::from_bytes(&seed)
        }
        None => SigningKey::generate(&mut OsRng),
    };
    Ok(KeyPair::from_signing(signing))
}

/// Signs `message` with a raw 32-byte secret key.
pub fn sign(message: &[u8], signing_key: &[u8]) -> Result<Signature, CryptoError> {
    let secret: [u8; 32] = signing_key
        .try_into()
        .map_err(|_| CryptoError::InvalidKey(format!("secret key must be 32 bytes, got {}", signing_key.len())))?;
    Ok(Signature::ed25519(SigningKey::from_bytes(&secret).sign(message).to_bytes()))
}

/// Returns `true` iff `sig` is a valid signature over exactly `message`
/// under `verification_key`. Malformed inputs are rejected, never an error.
pub fn verify_signature(message: &[u8], sig: &Signature, verification_key: &PublicKey) -> bool {
    if sig.scheme != SignatureScheme::Ed25519 {
        return false;
    }
    let Ok(bytes) = <[u8; 64]>::try_from(sig.bytes.as_slice()) else {
        return false;
    };
    let Ok(vk) = VerifyingKey::from_bytes(&verification_key.0) else {
        return false;
    };
    vk.verify(message, &ed25519_dalek::Signature::from_bytes(&bytes)).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_seed_is_deterministic() {
        let a = generate_keypair(Some(&[0u8; 32])).unwrap();
        let b = generate_keypair(Some(&[0u8; 32])).unwrap();
        assert_eq!(a.public(), b.public());
        assert_eq!(a.key_id(), b.key_id());
        assert_eq!(a.sign(b"m"), b.sign(b"m"));
    }

    #[test]
    fn fresh_entropy_differs() {
        let a = generate_keypair(None).unwrap();
        let b = generate_keypair(None).unwrap();
        assert_ne!(a.public(), b.public());
    }

    #[test]
    fn short_seed_rejected() {
        assert_eq!(generate_keypair(Some(&[0u8; 31])).unwrap_err(), CryptoError::InvalidSeed(31));
    }

    #[test]
    fn key_id_is_truncated_digest_of_public_key() {
        let k = generate_keypair(Some(&[7u8; 32])).unwrap();
        let expected = hex::encode(&digest(&k.public().0).0[..16]);
        assert_eq!(k.key_id(), expected);
        assert_eq!(k.key_id().len(), 32);
    }

    #[test]
    fn round_trip_and_key_mismatch() {
        let k = generate_keypair(Some(&[1u8; 32])).unwrap();
        let other = generate_keypair(Some(&[2u8; 32])).unwrap();
        let sig = sign(b"hello", &k.secret_bytes()).unwrap();
        assert!(verify_signature(b"hello", &sig, &k.public()));
        assert!(!verify_signature(b"hello", &sig, &other.public()));
    }

    #[test]
    fn truncated_signature_rejected() {
        let k = generate_keypair(Some(&[1u8; 32])).unwrap();
        let mut sig = k.sign(b"hello");
        sig.bytes.truncate(63);
        assert!(!verify_signature(b"hello", &sig, &k.public()));
    }

    #[test]
    fn malformed_secret_rejected() {
        assert!(matches!(sign(b"x", &[0u8; 5]), Err(CryptoError::InvalidKey(_))));
    }

    // RFC 8032 section 7.1, tests 1-3.
    const RFC8032: &[(&str, &str, &str, &str)] = &[
        (
            "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
            "",
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        ),
        (
            "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
            "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
            "72",
            "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
        ),
        (
            "c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
            "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025",
            "af82",
            "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a",
        ),
    ];

    #[test]
    fn rfc8032_vectors() {
        for (secret, public, msg, sig) in RFC8032 {
            let secret = hex::decode(secret).unwrap();
            let msg = hex::decode(msg).unwrap();
            let k = generate_keypair(Some(&secret)).unwrap();
            assert_eq!(k.public().to_hex(), *public);
            let produced = sign(&msg, &secret).unwrap();
            assert_eq!(produced.to_hex(), *sig);
            assert!(verify_signature(&msg, &produced, &k.public()));
        }
    }

    #[test]
    fn sha256_vectors() {
        assert_eq!(
            digest(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            digest(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn appended_zero_changes_digest() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let len = rng.gen_range(0..64);
            let x: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let mut y = x.clone();
            y.push(0);
            assert_eq!(digest(&x), digest(&x));
            assert_ne!(digest(&x), digest(&y));
        }
    }

    proptest! {
        #[test]
        fn sign_verify_round_trip(seed in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..256)) {
            let k = generate_keypair(Some(&seed)).unwrap();
            prop_assert!(verify_signature(&msg, &k.sign(&msg), &k.public()));
        }

        #[test]
        fn any_bit_flip_rejected(
            seed in any::<[u8; 32]>(),
            msg in proptest::collection::vec(any::<u8>(), 1..128),
            pos in any::<prop::sample::Index>(),
            bit in 0u8..8,
            flip_sig in any::<bool>(),
        ) {
            let k = generate_keypair(Some(&seed)).unwrap();
            let mut sig = k.sign(&msg);
            let mut msg = msg;
            if flip_sig {
                let i = pos.index(sig.bytes.len());
                sig.bytes[i] ^= 1 << bit;
            } else {
                let i = pos.index(msg.len());
                msg[i] ^= 1 << bit;
            }
            prop_assert!(!verify_signature(&msg, &sig, &k.public()));
        }
    }
}
