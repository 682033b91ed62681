use serde::{Deserialize, Serialize};

use super::tx::Transaction;
use crate::canonical::{self, CanonicalError};
use crate::crypto::{self, Digest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub transactions: Vec<Transaction>,
    pub block_hash: Digest,
}

impl Block {
    /// Seals `transactions` on top of `prev`.
    pub fn seal(prev: Option<&Block>, transactions: Vec<Transaction>) -> Self {
        let (height, prev_hash) = match prev {
            Some(b) => (b.height + 1, b.block_hash),
            None => (0, Digest::ZERO),
        };
        let mut block = Block { height, prev_hash, transactions, block_hash: Digest::ZERO };
        block.block_hash = block.compute_hash().expect("sealed blocks are encodable");
        block
    }

    /// Hash over the whole canonical block except the hash field, so every
    /// payload byte is covered.
    pub fn compute_hash(&self) -> Result<Digest, CanonicalError> {
        Ok(crypto::digest(&canonical::to_bytes_excluding(self, &["block_hash"])?))
    }

    pub fn is_consistent(&self) -> bool {
        self.compute_hash().is_ok_and(|h| h == self.block_hash)
            && self.transactions.iter().all(|tx| tx.derive_id().is_ok_and(|id| id == tx.tx_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Intact,
    Broken(u64),
}

/// Recomputes every block hash, transaction id and back-link, reporting the
/// lowest height where anything disagrees.
pub fn verify_chain_integrity(chain: &[Block]) -> ChainStatus {
    let mut prev = Digest::ZERO;
    for (i, block) in chain.iter().enumerate() {
        let height = i as u64;
        if block.height != height || block.prev_hash != prev || block.transactions.is_empty() || !block.is_consistent() {
            return ChainStatus::Broken(height);
        }
        prev = block.block_hash;
    }
    ChainStatus::Intact
}
