//! Seeded lifecycle workloads.
//!
//! [`run_workload`] drives a [`Node`] through a random mix of registrations,
//! endorsements, onboarding, issuance, verification, revocation, binding,
//! authentication and ownership transfer, including operations that the
//! ledger must refuse. The same seed always produces the same ledger.
//!
//! ```
//! use ssivdr::sim::{run_workload, WorkloadConfig};
//!
//! let run = run_workload(&WorkloadConfig { seed: 3, transactions: 60, ..Default::default() });
//! let counters = run.ledger().counters().snapshot();
//! assert!(counters.committed >= 60);
//! assert!(counters.rejected > 0);
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{generate_keypair, Digest, KeyPair};
use crate::identity::{Claim, DeviceType, Did, IdentityRecord, Rationale, Role, VcId, VerifiableCredential};
use crate::ledger::{CredentialStatus, Genesis, Ledger, Mode, Payload, Transaction};
use crate::node::{AuthReject, DeviceBinding, LogicalClock, Node};
use crate::trust::Threshold;

#[derive(Debug, Clone)]
pub struct WorkloadConfig {
    pub seed: u64,
    /// Minimum number of committed transactions. Rejected ones come on top.
    pub transactions: usize,
    pub manufacturers: usize,
    pub users: usize,
    pub tau: Threshold,
    pub batch_limit: usize,
    pub mode: Mode,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            seed: 0,
            transactions: 500,
            manufacturers: 2,
            users: 8,
            tau: Threshold::default(),
            batch_limit: crate::ledger::DEFAULT_BATCH_LIMIT,
            mode: Mode::Endorsement,
        }
    }
}

/// Things that happen off-chain, recorded so they can be audited against
/// the chain afterwards.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// An authentication attempt. `position` is the number of transactions
    /// committed when the challenge was answered.
    Auth { vc_id: VcId, delegated: bool, position: u64, result: Result<(), AuthReject> },
    /// A transfer attempt with the state digest on either side of it.
    Transfer { device: Did, new_owner: Did, committed: bool, before: Digest, after: Digest },
}

pub struct WorkloadRun {
    pub node: Node,
    pub events: Vec<Event>,
    pub keys: BTreeMap<Did, KeyPair>,
}

impl WorkloadRun {
    pub fn ledger(&self) -> &Arc<Ledger> {
        self.node.ledger()
    }
}

struct Sim {
    node: Node,
    rng: ChaCha8Rng,
    keys: BTreeMap<Did, KeyPair>,
    manufacturers: Vec<Did>,
    users: Vec<Did>,
    devices: Vec<Did>,
    credentials: Vec<VerifiableCredential>,
    bindings: Vec<(DeviceBinding, Did)>,
    events: Vec<Event>,
    next_key: u32,
    seed: u64,
}

impl Sim {
    fn fresh_key(&mut self) -> KeyPair {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8..12].copy_from_slice(&self.next_key.to_le_bytes());
        bytes[12] = 0x5e;
        self.next_key += 1;
        let k = generate_keypair(Some(&bytes)).expect("32-byte seed");
        self.keys.insert(Did::from_key(&k.public()), k.clone());
        k
    }

    fn key(&self, did: &Did) -> KeyPair {
        self.keys[did].clone()
    }

    fn record(&self, did: &Did) -> Option<IdentityRecord> {
        self.node.ledger().read(|s| s.identity(did).cloned())
    }

    fn pick<'a>(&mut self, from: &'a [Did]) -> Option<&'a Did> {
        from.choose(&mut self.rng)
    }

    fn committed(&self) -> u64 {
        self.node.ledger().counters().snapshot().committed
    }

    fn issuers(&self) -> Vec<Did> {
        self.manufacturers.iter().chain(&self.users).cloned().collect()
    }

    fn step(&mut self) {
        match self.rng.gen_range(0..100) {
            0..=14 => self.endorse(),
            15..=22 => self.onboard(),
            23..=32 => self.register_device(),
            33..=50 => self.issue(),
            51..=57 => self.verify(),
            58..=67 => self.revoke(),
            68..=81 => self.authenticate(),
            82..=86 => self.bind(),
            87..=91 => self.transfer(),
            _ => self.replay_attack(),
        }
    }

    /// Endorsers are mostly manufacturers and onboarded issuers, with an
    /// occasional endorsement from an arbitrary user.
    fn endorse(&mut self) {
        let onboarded: Vec<Did> = self.node.ledger().read(|s| s.onboarded_issuers().keys().cloned().collect());
        let issuers = match self.rng.gen_range(0..10) {
            0..=6 => self.manufacturers.clone(),
            7..=8 if !onboarded.is_empty() => onboarded,
            _ => self.users.clone(),
        };
        let users = self.users.clone();
        let (Some(from), Some(to)) = (self.pick(&issuers).cloned(), self.pick(&users).cloned()) else { return };
        if from == to {
            return;
        }
        let score = match self.rng.gen_range(0..6) {
            0 => self.rng.gen_range(0.0..0.5),
            _ => self.rng.gen_range(0.6..=1.0),
        };
        let _ = self.node.endorse(&self.key(&from), &to, score);
    }

    fn onboard(&mut self) {
        let users = self.users.clone();
        let Some(u) = self.pick(&users).cloned() else { return };
        let record = self.record(&u).expect("simulated users are registered");
        let _ = self.node.onboard_issuer(&record, &self.key(&u));
    }

    fn register_device(&mut self) {
        let users = self.users.clone();
        let Some(owner) = self.pick(&users).cloned() else { return };
        let t = if self.rng.gen_bool(0.6) { DeviceType::Strong } else { DeviceType::Weak };
        let dk = self.fresh_key();
        if let Ok(rec) = self.node.register_device(&self.key(&owner), &dk.public(), t) {
            self.devices.push(rec.did);
        }
    }

    fn issue(&mut self) {
        let issuers = self.issuers();
        let devices = self.devices.clone();
        let (Some(issuer), Some(device)) = (self.pick(&issuers).cloned(), self.pick(&devices).cloned()) else { return };
        let record = self.record(&device).expect("simulated devices are registered");
        let claims = vec![Claim::new("batch", self.rng.gen_range(0..1000u32).to_string())];
        if let Ok(vc) = self.node.issue_device_credential(&self.key(&issuer), &record, claims) {
            self.credentials.push(vc);
        }
    }

    fn random_credential(&mut self) -> Option<VerifiableCredential> {
        self.credentials.choose(&mut self.rng).cloned()
    }

    fn verify(&mut self) {
        let issuers = self.issuers();
        let (Some(vc), Some(verifier)) = (self.random_credential(), self.pick(&issuers).cloned()) else { return };
        let _ = self.node.verify_on_ledger(&self.key(&verifier), &vc.vc_id);
    }

    fn revoke(&mut self) {
        let Some(vc) = self.random_credential() else { return };
        let owner = self.record(&vc.holder).and_then(|r| r.owner);
        let revoker = match self.rng.gen_range(0..3) {
            0 => Some(vc.issuer.clone()),
            1 => owner,
            _ => {
                let users = self.users.clone();
                self.pick(&users).cloned()
            }
        };
        let Some(revoker) = revoker else { return };
        let rationale = match self.rng.gen_range(0..3) {
            0 => Rationale::Compromised,
            1 => Rationale::Stolen,
            _ => Rationale::Other("retired".into()),
        };
        let _ = self.node.revoke_credential(&self.key(&revoker), &vc.vc_id, rationale);
    }

    fn authenticate(&mut self) {
        if self.rng.gen_bool(0.25) && !self.bindings.is_empty() {
            return self.delegated();
        }
        let Some(vc) = self.random_credential() else { return };
        // Occasionally answer with the wrong key.
        let responder = if self.rng.gen_bool(0.1) { self.fresh_key() } else { self.key(&vc.holder) };
        let verifier = self.manufacturers[0].clone();
        let challenge = self.node.challenge(&verifier);
        let position = self.committed();
        let result = self.node.authenticate(&responder, &vc, &challenge);
        self.events.push(Event::Auth { vc_id: vc.vc_id, delegated: false, position, result });
    }

    fn delegated(&mut self) {
        let (binding, _) = self.bindings.choose(&mut self.rng).cloned().expect("non-empty");
        let weak_vcs: Vec<VerifiableCredential> =
            self.credentials.iter().filter(|vc| vc.holder == binding.weak).cloned().collect();
        let Some(vc) = weak_vcs.choose(&mut self.rng).cloned() else { return };
        let strong = self.key(&binding.strong);
        let challenge = self.node.challenge(&self.manufacturers[0].clone());
        let position = self.committed();
        let result = self.node.delegated_authenticate(&strong, &binding, &vc, &challenge);
        self.events.push(Event::Auth { vc_id: vc.vc_id, delegated: true, position, result });
    }

    fn bind(&mut self) {
        let users = self.users.clone();
        let Some(owner) = self.pick(&users).cloned() else { return };
        let owned: Vec<IdentityRecord> = self.node.ledger().read(|s| {
            s.identities().filter(|r| r.role == Role::Device && r.owner.as_ref() == Some(&owner)).cloned().collect()
        });
        let strong: Vec<_> = owned.iter().filter(|r| r.device_type == Some(DeviceType::Strong)).collect();
        let weak: Vec<_> = owned.iter().filter(|r| r.device_type == Some(DeviceType::Weak)).collect();
        let (Some(s), Some(w)) = (strong.choose(&mut self.rng), weak.choose(&mut self.rng)) else { return };
        if let Ok(b) = self.node.bind_weak_device(&self.key(&owner), s, w) {
            self.bindings.push((b, owner));
        }
        // Sometimes retire a binding right away so unbound delegation is exercised.
        if self.rng.gen_bool(0.2) {
            if let Some((b, owner)) = self.bindings.choose(&mut self.rng).cloned() {
                let _ = self.node.unbind(&self.key(&owner), &b);
            }
        }
    }

    fn transfer(&mut self) {
        let devices = self.devices.clone();
        let users = self.users.clone();
        let (Some(device), Some(new_owner)) = (self.pick(&devices).cloned(), self.pick(&users).cloned()) else { return };
        let dev = self.record(&device).expect("registered");
        let old_owner = dev.owner.clone().expect("devices have owners");
        if old_owner == new_owner {
            return;
        }
        let new_rec = self.record(&new_owner).expect("registered");
        let before = self.node.ledger().state_digest();
        let result = self.node.transfer_ownership(&self.key(&old_owner), &new_rec, &self.key(&new_owner), &dev);
        let after = self.node.ledger().state_digest();
        if let Ok(vc) = &result {
            self.credentials.push(vc.clone());
        }
        self.events.push(Event::Transfer { device, new_owner, committed: result.is_ok(), before, after });
    }

    /// Resubmits a committed credential, possibly a revoked one. The ledger
    /// must refuse to bring it back.
    fn replay_attack(&mut self) {
        let revoked: Vec<VerifiableCredential> = self.node.ledger().read(|s| {
            self.credentials
                .iter()
                .filter(|vc| s.credential(&vc.vc_id).is_some_and(|e| e.status == CredentialStatus::Revoked))
                .cloned()
                .collect()
        });
        let Some(vc) = revoked.choose(&mut self.rng).or(self.credentials.first()).cloned() else { return };
        let key = self.key(&vc.issuer);
        let now = self.node.now();
        if let Ok(tx) = Transaction::new(&key, Payload::Issue { credential: vc }, now) {
            self.node.ledger().submit(tx);
        }
    }
}

/// Runs a seeded workload and flushes the ledger.
pub fn run_workload(cfg: &WorkloadConfig) -> WorkloadRun {
    run_workload_observed(cfg, |_| {})
}

/// Like [`run_workload`], calling `observe` after every step.
pub fn run_workload_observed(cfg: &WorkloadConfig, mut observe: impl FnMut(&Ledger)) -> WorkloadRun {
    let mut keygen = Sim::bootstrap_keys(cfg);
    let genesis = Genesis::new(
        &keygen.iter().take(cfg.manufacturers).map(|k| k.public()).collect::<Vec<_>>(),
        cfg.tau,
        cfg.batch_limit,
        cfg.mode,
    )
    .expect("valid workload genesis");
    let ledger = Arc::new(Ledger::new(genesis));
    let node = Node::deterministic(ledger, Arc::new(LogicalClock::starting_at(1_700_000_000_000)), cfg.seed);
    let mut sim = Sim {
        node,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        keys: BTreeMap::new(),
        manufacturers: Vec::new(),
        users: Vec::new(),
        devices: Vec::new(),
        credentials: Vec::new(),
        bindings: Vec::new(),
        events: Vec::new(),
        next_key: keygen.len() as u32,
        seed: cfg.seed,
    };
    for (i, k) in keygen.drain(..).enumerate() {
        let did = Did::from_key(&k.public());
        sim.keys.insert(did.clone(), k.clone());
        if i < cfg.manufacturers {
            sim.manufacturers.push(did);
        } else if sim.node.register_user(&k).is_ok() {
            sim.users.push(did);
        }
    }
    while sim.committed() < cfg.transactions as u64 {
        sim.step();
        observe(sim.node.ledger());
    }
    sim.node.ledger().flush().expect("in-memory ledger has no sink");
    WorkloadRun { node: sim.node, events: sim.events, keys: sim.keys }
}

impl Sim {
    fn bootstrap_keys(cfg: &WorkloadConfig) -> Vec<KeyPair> {
        (0..cfg.manufacturers + cfg.users)
            .map(|i| {
                let mut bytes = [0u8; 32];
                bytes[..8].copy_from_slice(&cfg.seed.to_le_bytes());
                bytes[8..12].copy_from_slice(&(i as u32).to_le_bytes());
                bytes[12] = 0x5e;
                generate_keypair(Some(&bytes)).expect("32-byte seed")
            })
            .collect()
    }
}
