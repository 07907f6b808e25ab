use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::to_canonical_string;
use crate::crypto::{Digest, KeyPair, Nonce, PublicKey};
use crate::model::EntityMetadata;

use super::block::tx_root;
use super::{
    Authority, Block, LedgerError, Mempool, RequestInfo, ResourceId, StateWrite, Timestamp,
    Transaction, TxKind, MIN_VALIDATORS,
};

/// Blockchain memory: every key the applied blocks have written.
pub type Memory = BTreeMap<String, Value>;

pub const USER_PREFIX: &str = "user/";
pub const RESOURCE_PREFIX: &str = "resource/";
pub const CONTRACT_PREFIX: &str = "contract/";

pub fn user_memory_key(key_hash: &Digest) -> String {
    format!("{USER_PREFIX}{}", key_hash.to_hex())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub public_key: PublicKey,
    pub metadata: EntityMetadata,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HistoryFilter {
    User(PublicKey),
    Resource(ResourceId),
    Kind(TxKind),
    Nonce(Nonce),
}

impl HistoryFilter {
    pub fn matches(&self, tx: &Transaction) -> bool {
        match self {
            HistoryFilter::User(pk) => tx.user_key() == Some(pk.key_hash()),
            HistoryFilter::Resource(id) => tx.resource_id() == Some(*id),
            HistoryFilter::Kind(kind) => tx.kind() == *kind,
            HistoryFilter::Nonce(n) => match tx {
                Transaction::AccReq(t) => t.nonce == *n,
                Transaction::Storage(t) => t.nonce == *n,
                _ => false,
            },
        }
    }
}

/// Result of checking a block against the current tip.
struct Applied {
    memory: Option<Memory>,
    acc_nonces: Vec<Nonce>,
    storage_nonces: Vec<Nonce>,
}

#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Block>,
    authority: Authority,
    memory: Memory,
    acc_nonces: HashSet<Nonce>,
    storage_nonces: HashSet<Nonce>,
}

fn check_genesis(block: &Block) -> Result<Authority, String> {
    let authority = block.authority.clone().ok_or("genesis carries no authority")?;
    if authority.validators.len() < MIN_VALIDATORS {
        return Err(format!(
            "{} validators, need at least {MIN_VALIDATORS}",
            authority.validators.len()
        ));
    }
    if block.height != 0
        || block.prev_hash != Digest::ZERO
        || block.tx_root != Digest::ZERO
        || !block.transactions.is_empty()
        || !block.state_writes.is_empty()
        || block.signature.is_some()
        || block.proposer != authority.validators[0]
    {
        return Err("malformed genesis block".into());
    }
    Ok(authority)
}

impl Chain {
    pub fn genesis(
        validators: Vec<PublicKey>,
        admin_pk: PublicKey,
        storage_pk: PublicKey,
        timestamp: Timestamp,
    ) -> Result<Chain, LedgerError> {
        if validators.len() < MIN_VALIDATORS {
            return Err(LedgerError::Config(format!(
                "validator count must exceed 2, got {}",
                validators.len()
            )));
        }
        let authority = Authority {
            validators,
            admin_pk,
            storage_pk,
        };
        Chain::from_genesis(Block::genesis(authority, timestamp))
    }

    pub fn from_genesis(block: Block) -> Result<Chain, LedgerError> {
        let authority = check_genesis(&block).map_err(|reason| LedgerError::InvalidBlock {
            height: 0,
            reason,
        })?;
        Ok(Chain {
            blocks: vec![block],
            authority,
            memory: Memory::new(),
            acc_nonces: HashSet::new(),
            storage_nonces: HashSet::new(),
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    /// Height of the tip block.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn authority(&self) -> &Authority {
        &self.authority
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn memory_get(&self, key: &str) -> Option<&Value> {
        self.memory.get(key)
    }

    pub fn user_record(&self, key_hash: &Digest) -> Option<UserRecord> {
        lookup_user(&self.memory, key_hash)
    }

    /// Whether an access request with this nonce is already on chain.
    pub fn acc_nonce_spent(&self, nonce: &Nonce) -> bool {
        self.acc_nonces.contains(nonce)
    }

    /// Whether a redemption with this link nonce is already on chain.
    pub fn storage_nonce_logged(&self, nonce: &Nonce) -> bool {
        self.storage_nonces.contains(nonce)
    }

    pub fn scheduled_proposer(&self, height: u64) -> PublicKey {
        self.authority.validators[self.authority.scheduled(height)]
    }

    fn check(&self, block: &Block) -> Result<Applied, String> {
        let height = self.next_height();
        if block.height != height {
            return Err(format!("expected height {height}, got {}", block.height));
        }
        if block.prev_hash != self.tip().hash() {
            return Err("prev_hash does not match the tip".into());
        }
        if block.authority.is_some() {
            return Err("authority may only appear in genesis".into());
        }
        if block.proposer != self.scheduled_proposer(height) {
            return Err("proposer is not scheduled for this height".into());
        }
        if !block.signature_valid() {
            return Err("bad proposer signature".into());
        }
        if block.timestamp < self.tip().timestamp {
            return Err("timestamp goes backwards".into());
        }
        if block.tx_root != tx_root(&block.transactions) {
            return Err("tx_root mismatch".into());
        }

        let mut memory: Option<Memory> = None;
        let mut acc_nonces = Vec::new();
        let mut storage_nonces = Vec::new();
        for (i, tx) in block.transactions.iter().enumerate() {
            match tx {
                Transaction::Verified(v) => {
                    let Some(Transaction::AccReq(req)) = i.checked_sub(1).map(|j| &block.transactions[j])
                    else {
                        return Err(format!("tx {i}: Verified without a preceding AccReq"));
                    };
                    let mem = memory.as_ref().unwrap_or(&self.memory);
                    let record = lookup_user(mem, &v.user_key)
                        .ok_or_else(|| format!("tx {i}: Verified for an unregistered user"))?;
                    if v.user_key != req.user_pk.key_hash()
                        || v.timestamp != req.timestamp
                        || v.user_bits != record.metadata.encode()
                        || v.request_bits != req.request.to_bits()
                    {
                        return Err(format!("tx {i}: Verified does not match its AccReq"));
                    }
                }
                other => {
                    if !other.verify_signature(&self.authority) {
                        return Err(format!("tx {i}: bad signature"));
                    }
                }
            }
            match tx {
                Transaction::Setup(s) => {
                    let record = UserRecord {
                        public_key: s.user_pk,
                        metadata: s.metadata,
                    };
                    memory.get_or_insert_with(|| self.memory.clone()).insert(
                        user_memory_key(&s.user_pk.key_hash()),
                        serde_json::to_value(record).expect("record serializes"),
                    );
                }
                Transaction::AccReq(a) => {
                    if self.acc_nonces.contains(&a.nonce) || acc_nonces.contains(&a.nonce) {
                        return Err(format!("tx {i}: access request nonce reused"));
                    }
                    acc_nonces.push(a.nonce);
                }
                Transaction::Storage(s) => {
                    if self.storage_nonces.contains(&s.nonce) || storage_nonces.contains(&s.nonce) {
                        return Err(format!("tx {i}: link nonce redeemed twice"));
                    }
                    storage_nonces.push(s.nonce);
                }
                Transaction::Link(_) | Transaction::Verified(_) => {}
            }
        }
        for w in &block.state_writes {
            if !(w.key.starts_with(CONTRACT_PREFIX) || w.key.starts_with(RESOURCE_PREFIX)) {
                return Err(format!("state write to protected key `{}`", w.key));
            }
            memory
                .get_or_insert_with(|| self.memory.clone())
                .insert(w.key.clone(), w.value.clone());
        }
        Ok(Applied {
            memory,
            acc_nonces,
            storage_nonces,
        })
    }

    /// Reason the block would be rejected, if any.
    pub fn check_block(&self, block: &Block) -> Result<(), LedgerError> {
        self.check(block)
            .map(|_| ())
            .map_err(|reason| LedgerError::InvalidBlock {
                height: block.height,
                reason,
            })
    }

    pub fn validate_block(&self, block: &Block) -> bool {
        self.check(block).is_ok()
    }

    /// Append a valid block and apply its memory effects. An invalid block
    /// leaves the chain untouched.
    pub fn append_block(&mut self, block: Block) -> Result<(), LedgerError> {
        let applied = self.check(&block).map_err(|reason| LedgerError::InvalidBlock {
            height: block.height,
            reason,
        })?;
        if let Some(memory) = applied.memory {
            self.memory = memory;
        }
        self.acc_nonces.extend(applied.acc_nonces);
        self.storage_nonces.extend(applied.storage_nonces);
        self.blocks.push(block);
        Ok(())
    }

    /// Build and sign the next block. Fails when `proposer` is out of turn.
    pub fn assemble_block(
        &self,
        proposer: &KeyPair,
        transactions: Vec<Transaction>,
        state_writes: Vec<StateWrite>,
        now: Timestamp,
    ) -> Result<Block, LedgerError> {
        let height = self.next_height();
        if proposer.public != self.scheduled_proposer(height) {
            return Err(LedgerError::Schedule {
                height,
                expected: self.authority.scheduled(height),
            });
        }
        Ok(Block::signed(
            height,
            self.tip().hash(),
            now.max(self.tip().timestamp),
            proposer,
            transactions,
            state_writes,
        ))
    }

    /// Drain up to `batch` queued transactions into a signed block.
    pub fn produce_block(
        &self,
        mempool: &Mempool,
        proposer: &KeyPair,
        now: Timestamp,
        batch: usize,
    ) -> Result<Block, LedgerError> {
        let height = self.next_height();
        if proposer.public != self.scheduled_proposer(height) {
            return Err(LedgerError::Schedule {
                height,
                expected: self.authority.scheduled(height),
            });
        }
        self.assemble_block(proposer, mempool.drain(batch), Vec::new(), now)
    }

    /// Re-validate every block from genesis and compare the rebuilt memory.
    pub fn validate_chain(&self) -> bool {
        match validate_blocks(&self.blocks) {
            Ok(rebuilt) => rebuilt.memory == self.memory,
            Err(_) => false,
        }
    }

    pub fn query_history(&self, filter: &HistoryFilter) -> Vec<(u64, Transaction)> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(move |tx| (b.height, tx)))
            .filter(|(_, tx)| filter.matches(tx))
            .map(|(h, tx)| (h, tx.clone()))
            .collect()
    }

    /// Access request info of every AccReq on chain, in order.
    pub fn requests(&self) -> impl Iterator<Item = (u64, &RequestInfo)> {
        self.blocks.iter().flat_map(|b| {
            b.transactions
                .iter()
                .filter_map(|tx| tx.as_acc_req())
                .map(move |a| (b.height, &a.request))
        })
    }
}

fn lookup_user(memory: &Memory, key_hash: &Digest) -> Option<UserRecord> {
    memory
        .get(&user_memory_key(key_hash))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
}

/// Rebuild a chain from its blocks, checking each one in turn.
pub fn validate_blocks(blocks: &[Block]) -> Result<Chain, LedgerError> {
    let (first, rest) = blocks.split_first().ok_or(LedgerError::InvalidBlock {
        height: 0,
        reason: "empty chain".into(),
    })?;
    let mut chain = Chain::from_genesis(first.clone())?;
    for block in rest {
        chain.append_block(block.clone())?;
    }
    Ok(chain)
}

/// One canonical block per line.
pub fn save_chain(chain: &Chain, path: impl AsRef<Path>) -> Result<(), LedgerError> {
    let mut text = String::new();
    for block in chain.blocks() {
        text.push_str(&to_canonical_string(block));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Parse a JSON-lines chain. Each line must already be in canonical form,
/// so edits that survive JSON parsing (key order, hex case, spacing) are
/// still caught.
pub fn parse_blocks(text: &str) -> Result<Vec<Block>, LedgerError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(LedgerError::Persist {
            line: 1,
            reason: "empty chain file".into(),
        });
    }
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let block: Block = serde_json::from_str(line).map_err(|e| LedgerError::Persist {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if to_canonical_string(&block) != line {
                return Err(LedgerError::Persist {
                    line: i + 1,
                    reason: "line is not in canonical form".into(),
                });
            }
            Ok(block)
        })
        .collect()
}

pub fn load_blocks(path: impl AsRef<Path>) -> Result<Vec<Block>, LedgerError> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| LedgerError::Persist {
        line: 0,
        reason: "chain file is not UTF-8".into(),
    })?;
    parse_blocks(&text)
}
