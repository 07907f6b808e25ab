use serde::{Deserialize, Serialize};

use crate::canonical::{canonical_bytes_without, to_canonical_bytes};
use crate::crypto::{hash, verify_sig, Digest, KeyPair, PublicKey, Signature};
use crate::merkle::merkle_root;

use super::{Timestamp, Transaction};

/// Identities fixed at genesis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Authority {
    pub validators: Vec<PublicKey>,
    pub admin_pk: PublicKey,
    pub storage_pk: PublicKey,
}

impl Authority {
    pub fn scheduled(&self, height: u64) -> usize {
        (height % self.validators.len() as u64) as usize
    }
}

/// Contract-state update recorded by the proposer alongside the block's
/// transactions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateWrite {
    pub key: String,
    pub value: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    pub timestamp: Timestamp,
    pub proposer: PublicKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authority: Option<Authority>,
    pub transactions: Vec<Transaction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_writes: Vec<StateWrite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Signature>,
}

/// Merkle root over transaction digests; all zeros for an empty block.
pub fn tx_root(transactions: &[Transaction]) -> Digest {
    let leaves: Vec<Digest> = transactions.iter().map(Transaction::digest).collect();
    merkle_root(&leaves).unwrap_or(Digest::ZERO)
}

impl Block {
    pub(crate) fn genesis(authority: Authority, timestamp: Timestamp) -> Block {
        Block {
            height: 0,
            prev_hash: Digest::ZERO,
            tx_root: Digest::ZERO,
            timestamp,
            proposer: authority.validators[0],
            authority: Some(authority),
            transactions: Vec::new(),
            state_writes: Vec::new(),
            signature: None,
        }
    }

    pub(crate) fn signed(
        height: u64,
        prev_hash: Digest,
        timestamp: Timestamp,
        proposer: &KeyPair,
        transactions: Vec<Transaction>,
        state_writes: Vec<StateWrite>,
    ) -> Block {
        let mut block = Block {
            height,
            prev_hash,
            tx_root: tx_root(&transactions),
            timestamp,
            proposer: proposer.public,
            authority: None,
            transactions,
            state_writes,
            signature: None,
        };
        block.signature = Some(proposer.sign(&block.signing_bytes()));
        block
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self)
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical_bytes_without(self, "signature")
    }

    pub fn hash(&self) -> Digest {
        hash(&self.canonical_bytes())
    }

    pub fn signature_valid(&self) -> bool {
        match &self.signature {
            Some(sig) => verify_sig(&self.proposer, &self.signing_bytes(), sig),
            None => false,
        }
    }
}
