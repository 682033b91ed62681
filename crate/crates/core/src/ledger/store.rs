//! Genesis configuration and the line-oriented ledger file.
//!
//! A ledger file is a header line followed by one canonical block per line.
//! The header embeds the genesis configuration and its digest, so the file
//! alone is enough to replay the registry.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::block::Block;
use super::{LedgerConfig, Mode};
use crate::canonical::{self, CanonicalError};
use crate::crypto::{self, Digest, PublicKey};
use crate::identity::Did;
use crate::trust::Threshold;

pub const FILE_FORMAT: &str = "ssivdr-ledger";
pub const DEFAULT_BATCH_LIMIT: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("invalid genesis: {0}")]
    InvalidGenesis(String),
    #[error("corrupt ledger header: {0}")]
    HeaderCorrupt(String),
    #[error("corrupt block at height {height}: {reason}")]
    BlockCorrupt { height: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisManufacturer {
    pub did: Did,
    pub verification_key: PublicKey,
}

/// Initial registry configuration: the root manufacturers and the policy
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genesis {
    pub manufacturers: Vec<GenesisManufacturer>,
    pub tau: Threshold,
    pub batch_limit: usize,
    #[serde(default)]
    pub mode: Mode,
}

impl Genesis {
    pub fn new(manufacturers: &[PublicKey], tau: Threshold, batch_limit: usize, mode: Mode) -> Result<Self, StoreError> {
        let genesis = Genesis {
            manufacturers: manufacturers
                .iter()
                .map(|k| GenesisManufacturer { did: Did::from_key(k), verification_key: *k })
                .collect(),
            tau,
            batch_limit,
            mode,
        };
        genesis.validate()?;
        Ok(genesis)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.batch_limit == 0 {
            return Err(StoreError::InvalidGenesis("batch limit must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.manufacturers {
            if !m.did.matches_key(&m.verification_key) {
                return Err(StoreError::InvalidGenesis(format!("{} does not match its key", m.did)));
            }
            if !seen.insert(&m.did) {
                return Err(StoreError::InvalidGenesis(format!("{} listed twice", m.did)));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> LedgerConfig {
        LedgerConfig { tau: self.tau, batch_limit: self.batch_limit, mode: self.mode }
    }

    pub fn digest(&self) -> Digest {
        crypto::digest(&canonical::to_bytes(self).expect("genesis is encodable"))
    }

    pub fn to_text(&self) -> String {
        canonical::to_string(self).expect("genesis is encodable")
    }

    /// Parses a genesis file. Whitespace around the record is tolerated; the
    /// record itself need not be canonical, since people edit these by hand.
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let genesis: Genesis = canonical::from_bytes(text.trim().as_bytes())?;
        genesis.validate()?;
        Ok(genesis)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    genesis: Genesis,
    genesis_digest: Digest,
}

fn header_line(genesis: &Genesis) -> String {
    let header = Header { format: FILE_FORMAT.into(), genesis: genesis.clone(), genesis_digest: genesis.digest() };
    canonical::to_string(&header).expect("header is encodable")
}

fn parse_header(line: &[u8]) -> Result<Genesis, String> {
    let header: Header = canonical::from_bytes_strict(line).map_err(|e| e.to_string())?;
    if header.format != FILE_FORMAT {
        return Err(format!("unknown format {:?}", header.format));
    }
    header.genesis.validate().map_err(|e| e.to_string())?;
    if header.genesis.digest() != header.genesis_digest {
        return Err("genesis digest mismatch".into());
    }
    Ok(header.genesis)
}

/// Append-only writer for a ledger file.
#[derive(Debug)]
pub struct LedgerFile {
    out: BufWriter<File>,
}

impl LedgerFile {
    /// Creates a new file containing only the header.
    pub fn create(path: &Path, genesis: &Genesis) -> Result<Self, StoreError> {
        let mut out = BufWriter::new(OpenOptions::new().write(true).create_new(true).open(path)?);
        writeln!(out, "{}", header_line(genesis))?;
        out.flush()?;
        Ok(LedgerFile { out })
    }

    pub fn open_append(path: &Path) -> Result<Self, StoreError> {
        Ok(LedgerFile { out: BufWriter::new(OpenOptions::new().append(true).open(path)?) })
    }

    pub fn append(&mut self, block: &Block) -> Result<(), StoreError> {
        self.out.write_all(&canonical::to_bytes(block)?)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a complete ledger file in one go.
pub fn write_ledger(path: &Path, genesis: &Genesis, chain: &[Block]) -> Result<(), StoreError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header_line(genesis))?;
    for block in chain {
        out.write_all(&canonical::to_bytes(block)?)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Strict parse of a ledger file. Every line must be byte-identical to the
/// canonical encoding of what it decodes to.
pub fn parse_ledger(bytes: &[u8]) -> Result<(Genesis, Vec<Block>), StoreError> {
    let mut lines = split_lines(bytes).map_err(|e| match e {
        LineError::Header(r) => StoreError::HeaderCorrupt(r),
        LineError::Block(height, reason) => StoreError::BlockCorrupt { height, reason },
    })?;
    let header = lines.remove(0);
    let genesis = parse_header(header).map_err(StoreError::HeaderCorrupt)?;
    let mut chain = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        let block: Block = canonical::from_bytes_strict(line)
            .map_err(|e| StoreError::BlockCorrupt { height: i as u64, reason: e.to_string() })?;
        chain.push(block);
    }
    Ok((genesis, chain))
}

pub fn read_ledger(path: &Path) -> Result<(Genesis, Vec<Block>), StoreError> {
    parse_ledger(&std::fs::read(path)?)
}

enum LineError {
    Header(String),
    Block(u64, String),
}

/// Splits on `\n`, requiring a terminating newline and no empty lines.
fn split_lines(bytes: &[u8]) -> Result<Vec<&[u8]>, LineError> {
    if bytes.is_empty() {
        return Err(LineError::Header("empty file".into()));
    }
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    let last = lines.pop().expect("split yields at least one item");
    let count = lines.len();
    if !last.is_empty() {
        // Unterminated final line: attribute it to the record it belongs to.
        return Err(match count {
            0 => LineError::Header("missing newline".into()),
            n => LineError::Block(n as u64 - 1, "missing newline".into()),
        });
    }
    for (i, line) in lines.iter().enumerate() {
        if line.is_empty() {
            return Err(match i {
                0 => LineError::Header("empty header".into()),
                n => LineError::Block(n as u64 - 1, "empty line".into()),
            });
        }
    }
    Ok(lines)
}
