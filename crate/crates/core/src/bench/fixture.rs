use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::crypto::{generate_keypair, KeyPair};
use crate::identity::{new_credential, Claim, DeviceType, Did, IdentityRecord, Timestamp, VerifiableCredential};
use crate::ledger::{Genesis, Ledger, Mode, Payload, Transaction};
use crate::node::{LogicalClock, Node};
use crate::trust::Threshold;

pub const MANUFACTURERS: usize = 2;
pub const USERS: usize = 8;

/// A populated registry: manufacturers, users, and devices spread across
/// the users. In endorsement mode half the users are endorsed by
/// manufacturers and the other half only through those users, and all of
/// them are onboarded issuers.
pub struct Fixture {
    pub node: Node,
    pub mode: Mode,
    pub manufacturers: Vec<KeyPair>,
    pub users: Vec<KeyPair>,
    pub devices: Vec<(KeyPair, IdentityRecord)>,
    /// Issuers of the measured workload.
    pub issuers: Vec<(KeyPair, IdentityRecord)>,
    pub credentials: Vec<VerifiableCredential>,
}

fn key(seed: u64, domain: u8, i: usize) -> KeyPair {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8] = domain;
    bytes[9..17].copy_from_slice(&(i as u64).to_le_bytes());
    generate_keypair(Some(&bytes)).expect("32-byte seed")
}

impl Fixture {
    pub fn build(seed: u64, mode: Mode, tau: Threshold, devices: usize) -> Result<Self, BenchError> {
        let manufacturers: Vec<KeyPair> = (0..MANUFACTURERS).map(|i| key(seed, 1, i)).collect();
        let users: Vec<KeyPair> = (0..USERS).map(|i| key(seed, 2, i)).collect();
        let genesis = Genesis::new(&manufacturers.iter().map(|k| k.public()).collect::<Vec<_>>(), tau, 64, mode)
            .map_err(|e| BenchError::Fixture(e.to_string()))?;
        let node = Node::deterministic(Arc::new(Ledger::new(genesis)), Arc::new(LogicalClock::starting_at(1_000)), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1f7);
        let fail = |e: crate::node::NodeError| BenchError::Fixture(e.to_string());

        let records: Vec<IdentityRecord> = users.iter().map(|k| node.register_user(k)).collect::<Result<_, _>>().map_err(fail)?;
        if mode == Mode::Endorsement {
            let half = USERS / 2;
            for (i, u) in records.iter().enumerate().take(half) {
                node.endorse(&manufacturers[i % MANUFACTURERS], &u.did, rng.gen_range(0.85..=1.0)).map_err(fail)?;
            }
            for (i, u) in records.iter().enumerate().skip(half) {
                node.endorse(&users[i - half], &u.did, rng.gen_range(0.85..=1.0)).map_err(fail)?;
                node.endorse(&users[(i - half + 1) % half], &u.did, rng.gen_range(0.8..=1.0)).map_err(fail)?;
            }
            // A back-edge so the graph has cycles.
            node.endorse(&users[half], &records[0].did, rng.gen_range(0.8..=1.0)).map_err(fail)?;
            for (k, r) in users.iter().zip(&records) {
                node.onboard_issuer(r, k).map_err(fail)?;
            }
        }

        let mut device_list = Vec::with_capacity(devices);
        for i in 0..devices {
            let dk = key(seed, 3, i);
            let rec = node.register_device(&users[i % USERS], &dk.public(), DeviceType::Strong).map_err(fail)?;
            device_list.push((dk, rec));
        }
        let issuers: Vec<(KeyPair, IdentityRecord)> = match mode {
            Mode::Endorsement => users.iter().cloned().zip(records.iter().cloned()).collect(),
            Mode::Baseline => manufacturers.iter().map(|k| (k.clone(), IdentityRecord::manufacturer(&k.public()))).collect(),
        };
        node.ledger().flush().map_err(|e| BenchError::Fixture(e.to_string()))?;
        Ok(Fixture { node, mode, manufacturers, users, devices: device_list, issuers, credentials: Vec::new() })
    }

    /// Gives every device one credential from the issuer pool.
    pub fn credential_devices(&mut self) -> Result<(), BenchError> {
        for (i, (_, dev)) in self.devices.iter().enumerate() {
            let (ik, _) = &self.issuers[i % self.issuers.len()];
            let vc = self
                .node
                .issue_device_credential(ik, dev, vec![Claim::new("fixture", i.to_string())])
                .map_err(|e| BenchError::Fixture(e.to_string()))?;
            self.credentials.push(vc);
        }
        self.node.ledger().flush().map_err(|e| BenchError::Fixture(e.to_string()))?;
        Ok(())
    }

    pub fn verifier(&self) -> Did {
        Did::from_key(&self.manufacturers[0].public())
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        self.node.ledger()
    }

    /// `n` pre-signed issue transactions. Holders, claims and timestamps
    /// depend only on `seed` and `n`; the issuer is the `i mod k`-th member
    /// of this fixture's issuer pool.
    pub fn issue_workload(&self, seed: u64, n: usize, start: Timestamp) -> Vec<Transaction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x155e);
        (0..n)
            .map(|i| {
                let (_, dev) = &self.devices[rng.gen_range(0..self.devices.len())];
                let (ik, irec) = &self.issuers[i % self.issuers.len()];
                let ts = start + i as Timestamp;
                let claims = vec![Claim::new("seq", i.to_string()), Claim::new("lot", rng.gen_range(0..10_000u32).to_string())];
                let vc = new_credential(irec, ik, &dev.did, claims, ts).expect("fixture records match keys");
                Transaction::new(ik, Payload::Issue { credential: vc }, ts).expect("encodable")
            })
            .collect()
    }

    /// Pre-signed logged verifications of the given credentials, submitted by
    /// the first manufacturer.
    pub fn verify_workload(&self, credentials: &[VerifiableCredential], start: Timestamp) -> Vec<Transaction> {
        let verifier = self.verifier();
        credentials
            .iter()
            .enumerate()
            .map(|(i, vc)| {
                let payload = Payload::Verify { vc_id: vc.vc_id, verifier: verifier.clone() };
                Transaction::new(&self.manufacturers[0], payload, start + i as Timestamp).expect("encodable")
            })
            .collect()
    }
}
