//! Post-hoc audit of a finished workload against its own chain.
//!
//! The chain is re-applied one transaction at a time, and lifecycle rules
//! are checked on the intermediate states. Issuer trust is recomputed with
//! the brute-force oracle rather than the library's evaluator.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ssivdr::identity::{Did, Rationale, VcId};
use ssivdr::ledger::{replay, CredentialStatus, LedgerState, Mode, OpCounters, Payload, Transaction};
use ssivdr::sim::{Event, WorkloadRun};

use super::oracle::{Oracle, OracleGraph};

#[derive(Debug, Default)]
pub struct Audit {
    pub violations: Vec<String>,
    pub transactions: usize,
    pub accepted_auths: usize,
    pub rejected_auths: usize,
    pub issues_checked: usize,
    pub revocations: usize,
    pub transfers: usize,
    pub failed_transfers: usize,
}

impl Audit {
    fn violation(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

fn oracle_score(state: &LedgerState, did: &Did) -> f64 {
    let og = OracleGraph::from_graph(state.trust_graph());
    Oracle::new(&og).score(og.index(did))
}

fn device_active(state: &LedgerState, device: &Did) -> BTreeSet<VcId> {
    state
        .credentials_held_by(device)
        .filter(|e| e.status == CredentialStatus::Active)
        .map(|e| e.credential.vc_id)
        .collect()
}

pub fn audit(run: &WorkloadRun) -> Audit {
    let ledger = run.ledger();
    let genesis = ledger.genesis();
    let chain = ledger.chain();
    let mut a = Audit::default();

    match replay(&genesis, &chain) {
        Ok(state) if state.canonical_bytes() == ledger.state_snapshot().canonical_bytes() => {}
        Ok(_) => a.violation("replay differs from live state".into()),
        Err(e) => a.violation(format!("replay failed: {e}")),
    }

    let txs: Vec<(u64, &Transaction)> =
        chain.iter().flat_map(|b| b.transactions.iter().map(move |t| (b.height, t))).collect();
    a.transactions = txs.len();
    let counters = OpCounters::default();
    let mut state = LedgerState::genesis(&genesis);
    let mut issued_at: BTreeMap<VcId, usize> = BTreeMap::new();
    let mut revoked_at: BTreeMap<VcId, usize> = BTreeMap::new();
    // The state before each transaction, plus the final one.
    let mut states: Vec<LedgerState> = Vec::with_capacity(txs.len() + 1);

    for (i, &(height, tx)) in txs.iter().enumerate() {
        states.push(state.clone());
        if let Payload::Issue { credential } = &tx.payload {
            a.issues_checked += 1;
            let issuer = &credential.issuer;
            let authorized = state.is_manufacturer(issuer)
                || (genesis.mode == Mode::Endorsement
                    && state.is_onboarded(issuer)
                    && oracle_score(&state, issuer) + 1e-12 >= genesis.tau.tau());
            if !authorized {
                a.violation(format!("tx {i}: issue by unauthorized issuer {issuer}"));
            }
            if issued_at.insert(credential.vc_id, i).is_some() {
                a.violation(format!("tx {i}: credential {} issued twice", credential.vc_id.to_hex()));
            }
        }
        if let Err(r) = state.apply(tx, &counters) {
            a.violation(format!("tx {i} at height {height} does not re-apply: {r}"));
            continue;
        }
        if let Payload::Revoke { record } = &tx.payload {
            a.revocations += 1;
            revoked_at.insert(record.vc_id, i);
        }
        for vc_id in revoked_at.keys() {
            if state.credential(vc_id).map(|e| e.status) != Some(CredentialStatus::Revoked) {
                a.violation(format!("tx {i}: revoked credential {} is active again", vc_id.to_hex()));
            }
        }
    }
    states.push(state);

    for (i, &(height, tx)) in txs.iter().enumerate() {
        if let Payload::Transfer { device, new_owner } = &tx.payload {
            a.transfers += 1;
            check_transfer(&mut a, &txs, &states, i, height, device, new_owner);
        }
    }

    for e in &run.events {
        match e {
            Event::Auth { vc_id, position, result, .. } => {
                if result.is_err() {
                    a.rejected_auths += 1;
                    continue;
                }
                a.accepted_auths += 1;
                let p = *position as usize;
                if revoked_at.get(vc_id).is_some_and(|&r| r < p) {
                    a.violation(format!("accepted authentication of revoked credential {}", vc_id.to_hex()));
                }
                if !issued_at.get(vc_id).is_some_and(|&s| s < p) {
                    a.violation(format!("accepted authentication of unissued credential {}", vc_id.to_hex()));
                }
            }
            Event::Transfer { committed: false, before, after, device, .. } => {
                a.failed_transfers += 1;
                if before != after {
                    a.violation(format!("failed transfer of {device} changed state"));
                }
            }
            Event::Transfer { .. } => {}
        }
    }
    a
}

/// A transfer must sit in one block with the revocation of every credential
/// the device held and the new owner's fresh credential right after it.
fn check_transfer(
    a: &mut Audit,
    txs: &[(u64, &Transaction)],
    states: &[LedgerState],
    i: usize,
    height: u64,
    device: &Did,
    new_owner: &Did,
) {
    let old_owner = states[i].identity(device).and_then(|r| r.owner.clone());
    let mut start = i;
    let mut revoked = BTreeSet::new();
    while start > 0 {
        let (h, prev) = txs[start - 1];
        match &prev.payload {
            Payload::Revoke { record }
                if h == height
                    && record.rationale == Rationale::OwnershipTransfer
                    && Some(&record.revoker) == old_owner.as_ref() =>
            {
                revoked.insert(record.vc_id);
                start -= 1;
            }
            _ => break,
        }
    }
    let before = device_active(&states[start], device);
    if before != revoked {
        a.violation(format!("transfer of {device}: revoked {revoked:?} but device held {before:?}"));
    }
    match txs.get(i + 1) {
        Some((h, next)) if *h == height => match &next.payload {
            Payload::Issue { credential } if &credential.holder == device && &credential.issuer == new_owner => {
                let after = device_active(&states[i + 2], device);
                if after != BTreeSet::from([credential.vc_id]) {
                    a.violation(format!("transfer of {device}: device left with {after:?}"));
                }
                if states[i + 2].identity(device).and_then(|r| r.owner.as_ref()) != Some(new_owner) {
                    a.violation(format!("transfer of {device}: owner not updated"));
                }
            }
            _ => a.violation(format!("transfer of {device} not followed by the new owner's issue")),
        },
        _ => a.violation(format!("transfer of {device} split across blocks")),
    }
}
