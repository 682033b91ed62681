//! The verifiable data registry: a hash-chained transaction log with a
//! materialized state.
//!
//! All writes go through one [`Ledger`] handle, which validates each
//! transaction against the current state, batches committed transactions
//! into blocks and optionally appends sealed blocks to a [`LedgerFile`].
//! Because the state is a pure fold of the log, [`replay`] rebuilds it
//! byte-for-byte from the chain.

mod block;
mod state;
mod store;
mod tx;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

pub use block::{verify_chain_integrity, Block, ChainStatus};
pub use state::{
    CounterSnapshot, CredentialEntry, CredentialStatus, InvalidReason, LedgerState, OpCounters, Rejection,
    VerificationEvent, VerifyOutcome,
};
pub use store::{
    parse_ledger, read_ledger, write_ledger, Genesis, GenesisManufacturer, LedgerFile, StoreError, DEFAULT_BATCH_LIMIT,
    FILE_FORMAT,
};
pub use tx::{Payload, Transaction, TxId, TxKind};

use crate::crypto::Digest;
use crate::identity::VcId;
use crate::trust::Threshold;

/// Whether the endorsement framework is active. In baseline mode only
/// manufacturers issue credentials and no trust evaluation ever runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Endorsement,
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Endorsement => "endorsement",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "endorsement" => Ok(Mode::Endorsement),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other:?}, expected endorsement or baseline")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerConfig {
    pub tau: Threshold,
    pub batch_limit: usize,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Receipt {
    Committed { tx_id: TxId, outcome: Option<VerifyOutcome> },
    Rejected { tx_id: TxId, reason: Rejection },
}

impl Receipt {
    pub fn tx_id(&self) -> TxId {
        match self {
            Receipt::Committed { tx_id, .. } | Receipt::Rejected { tx_id, .. } => *tx_id,
        }
    }

    pub fn is_committed(&self) -> bool {
        matches!(self, Receipt::Committed { .. })
    }

    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            Receipt::Rejected { reason, .. } => Some(reason),
            Receipt::Committed { .. } => None,
        }
    }

    /// The verification outcome of a committed verify transaction.
    pub fn outcome(&self) -> Option<VerifyOutcome> {
        match self {
            Receipt::Committed { outcome, .. } => *outcome,
            Receipt::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("integrity violation at height {height}: {reason}")]
    IntegrityViolation { height: u64, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct Inner {
    genesis: Genesis,
    state: LedgerState,
    chain: Vec<Block>,
    pending: Vec<Transaction>,
    sink: Option<LedgerFile>,
    persisted: usize,
}

impl Inner {
    fn seal(&mut self) -> Option<u64> {
        if self.pending.is_empty() {
            return None;
        }
        let block = Block::seal(self.chain.last(), std::mem::take(&mut self.pending));
        let height = block.height;
        self.chain.push(block);
        Some(height)
    }
}

/// Handle to a single-writer ledger. Writers serialize on an internal lock;
/// readers see the last committed state.
pub struct Ledger {
    inner: RwLock<Inner>,
    counters: OpCounters,
}

impl Ledger {
    pub fn new(genesis: Genesis) -> Self {
        let state = LedgerState::genesis(&genesis);
        Ledger {
            inner: RwLock::new(Inner { genesis, state, chain: Vec::new(), pending: Vec::new(), sink: None, persisted: 0 }),
            counters: OpCounters::default(),
        }
    }

    /// Creates a fresh ledger file and returns a ledger that appends to it.
    pub fn create_file(path: &Path, genesis: Genesis) -> Result<Self, LedgerError> {
        let sink = LedgerFile::create(path, &genesis)?;
        let ledger = Ledger::new(genesis);
        ledger.inner.write().sink = Some(sink);
        Ok(ledger)
    }

    /// Loads and replays an existing ledger file, then appends to it.
    pub fn open_file(path: &Path) -> Result<Self, LedgerError> {
        let (genesis, chain) = read_ledger(path)?;
        let ledger = Ledger::from_chain(genesis, chain)?;
        {
            let mut inner = ledger.inner.write();
            inner.sink = Some(LedgerFile::open_append(path)?);
            inner.persisted = inner.chain.len();
        }
        Ok(ledger)
    }

    /// Rebuilds a ledger from a verified chain.
    pub fn from_chain(genesis: Genesis, chain: Vec<Block>) -> Result<Self, LedgerError> {
        let state = replay(&genesis, &chain)?;
        let persisted = chain.len();
        Ok(Ledger {
            inner: RwLock::new(Inner { genesis, state, chain, pending: Vec::new(), sink: None, persisted }),
            counters: OpCounters::default(),
        })
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn config(&self) -> LedgerConfig {
        *self.inner.read().state.config()
    }

    pub fn genesis(&self) -> Genesis {
        self.inner.read().genesis.clone()
    }

    /// Validates and applies one transaction. Seals a block when the
    /// pending batch reaches the limit.
    pub fn submit(&self, tx: Transaction) -> Receipt {
        let mut inner = self.inner.write();
        let receipt = match inner.state.apply(&tx, &self.counters) {
            Ok(outcome) => {
                let tx_id = tx.tx_id;
                inner.pending.push(tx);
                if inner.pending.len() >= inner.state.config().batch_limit {
                    inner.seal();
                }
                Receipt::Committed { tx_id, outcome }
            }
            Err(reason) => Receipt::Rejected { tx_id: tx.tx_id, reason },
        };
        self.counters.outcome(receipt.is_committed());
        receipt
    }

    /// Applies `txs` all-or-nothing, and places them in a single block.
    /// On failure the first offending receipt carries the real reason and
    /// nothing is committed.
    pub fn submit_atomic(&self, txs: Vec<Transaction>) -> Result<Vec<Receipt>, Receipt> {
        let mut inner = self.inner.write();
        let limit = inner.state.config().batch_limit;
        let reject = |tx: &Transaction, reason| {
            self.counters.outcome(false);
            Receipt::Rejected { tx_id: tx.tx_id, reason }
        };
        if txs.is_empty() {
            return Ok(Vec::new());
        }
        if txs.len() > limit {
            return Err(reject(&txs[0], Rejection::GroupTooLarge(limit)));
        }
        let mut scratch = inner.state.clone();
        let mut receipts = Vec::with_capacity(txs.len());
        for tx in &txs {
            match scratch.apply(tx, &self.counters) {
                Ok(outcome) => receipts.push(Receipt::Committed { tx_id: tx.tx_id, outcome }),
                Err(reason) => return Err(reject(tx, reason)),
            }
        }
        if inner.pending.len() + txs.len() > limit {
            inner.seal();
        }
        inner.state = scratch;
        inner.pending.extend(txs);
        if inner.pending.len() >= limit {
            inner.seal();
        }
        for _ in &receipts {
            self.counters.outcome(true);
        }
        Ok(receipts)
    }

    /// Seals any pending transactions and writes unpersisted blocks to the
    /// attached file. Returns the height of the newly sealed block, if any.
    pub fn flush(&self) -> Result<Option<u64>, StoreError> {
        let mut inner = self.inner.write();
        let sealed = inner.seal();
        let Inner { chain, sink, persisted, .. } = &mut *inner;
        if let Some(sink) = sink {
            for block in &chain[*persisted..] {
                sink.append(block)?;
            }
        }
        *persisted = chain.len();
        Ok(sealed)
    }

    /// Unlogged verification against the current state.
    pub fn query(&self, vc_id: &VcId) -> VerifyOutcome {
        self.inner.read().state.check_credential(vc_id, &self.counters)
    }

    /// Runs `f` with shared access to the current state.
    pub fn read<R>(&self, f: impl FnOnce(&LedgerState) -> R) -> R {
        f(&self.inner.read().state)
    }

    pub fn state_snapshot(&self) -> LedgerState {
        self.inner.read().state.clone()
    }

    pub fn chain(&self) -> Vec<Block> {
        self.inner.read().chain.clone()
    }

    pub fn height(&self) -> usize {
        self.inner.read().chain.len()
    }

    pub fn pending_len(&self) -> usize {
        self.inner.read().pending.len()
    }

    pub fn state_digest(&self) -> Digest {
        self.inner.read().state.digest()
    }

    pub fn write_to(&self, path: &Path) -> Result<(), StoreError> {
        let inner = self.inner.read();
        write_ledger(path, &inner.genesis, &inner.chain)
    }
}

/// Rebuilds the state by re-applying every transaction in `chain` to the
/// genesis state.
pub fn replay(genesis: &Genesis, chain: &[Block]) -> Result<LedgerState, LedgerError> {
    if let ChainStatus::Broken(height) = verify_chain_integrity(chain) {
        return Err(LedgerError::IntegrityViolation { height, reason: "hash chain does not recompute".into() });
    }
    let counters = OpCounters::default();
    let mut state = LedgerState::genesis(genesis);
    for block in chain {
        if block.transactions.len() > genesis.batch_limit {
            return Err(LedgerError::IntegrityViolation { height: block.height, reason: "block exceeds batch limit".into() });
        }
        for tx in &block.transactions {
            state.apply(tx, &counters).map_err(|r| LedgerError::IntegrityViolation {
                height: block.height,
                reason: format!("transaction {} does not apply: {r}", tx.tx_id.to_hex()),
            })?;
        }
    }
    Ok(state)
}

/// Result of auditing a ledger file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditReport {
    Intact { blocks: usize },
    HeaderCorrupt(String),
    Broken { height: u64, reason: String },
}

/// Checks a ledger file byte by byte: strict per-line parsing, hash chain
/// recomputation, then a full replay.
pub fn audit(bytes: &[u8]) -> AuditReport {
    let (genesis, chain) = match parse_ledger(bytes) {
        Ok(parsed) => parsed,
        Err(StoreError::HeaderCorrupt(reason)) => return AuditReport::HeaderCorrupt(reason),
        Err(StoreError::BlockCorrupt { height, reason }) => return AuditReport::Broken { height, reason },
        Err(other) => return AuditReport::HeaderCorrupt(other.to_string()),
    };
    match replay(&genesis, &chain) {
        Ok(_) => AuditReport::Intact { blocks: chain.len() },
        Err(LedgerError::IntegrityViolation { height, reason }) => AuditReport::Broken { height, reason },
        Err(other) => AuditReport::Broken { height: 0, reason: other.to_string() },
    }
}

#[cfg(test)]
mod tests;
