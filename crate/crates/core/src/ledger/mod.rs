//! Permissioned ledger: transactions, hash-chained blocks produced by a
//! round-robin validator schedule, and the key-value memory derived from
//! applying them.

mod block;
mod chain;
mod mempool;
mod tx;

use thiserror::Error;

pub use block::{Authority, Block, StateWrite};
pub use chain::{
    load_blocks, parse_blocks, save_chain, user_memory_key, validate_blocks, Chain, HistoryFilter,
    Memory, UserRecord, CONTRACT_PREFIX, RESOURCE_PREFIX, USER_PREFIX,
};
pub use mempool::{Admission, Mempool, RejectReason};
pub use tx::{
    AccReqTx, LinkTx, RequestInfo, ResourceId, SetupTx, StorageTx, Transaction, TxKind,
    VerifiedTx, OPERATION_BITS, RESOURCE_ID_BITS,
};

/// POSIX seconds.
pub type Timestamp = u64;

pub const DEFAULT_FRESHNESS_WINDOW: u64 = 120;
pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const MIN_VALIDATORS: usize = 3;

/// `|now - ts| <= window`.
pub fn is_fresh(ts: Timestamp, now: Timestamp, window: u64) -> bool {
    ts.abs_diff(now) <= window
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("height {height}: validator {expected} is scheduled, not the given proposer")]
    Schedule { height: u64, expected: usize },
    #[error("invalid block at height {height}: {reason}")]
    InvalidBlock { height: u64, reason: String },
    #[error("chain file line {line}: {reason}")]
    Persist { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LedgerError {
    fn from(e: std::io::Error) -> Self {
        LedgerError::Io(e.to_string())
    }
}
