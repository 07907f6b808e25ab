use serde::{Deserialize, Serialize};

use crate::canonical::{canonical_bytes_without, to_canonical_bytes};
use crate::crypto::{
    hash, verify_sig, Ciphertext, Digest, KeyPair, Nonce, PublicKey, Signature, SIGNATURE_LEN,
};
use crate::model::{binary_repr, BitVector, EntityMetadata, Operation};

use super::{Authority, Timestamp};

pub type ResourceId = u32;

/// Width of the resource id inside request bits.
pub const RESOURCE_ID_BITS: usize = 32;
/// Width of the operation index inside request bits.
pub const OPERATION_BITS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestInfo {
    pub resource_id: ResourceId,
    pub operation: Operation,
}

impl RequestInfo {
    /// 32-bit resource id followed by the 2-bit operation index.
    pub fn to_bits(&self) -> BitVector {
        binary_repr(self.resource_id as u64, RESOURCE_ID_BITS)
            .expect("u32 fits")
            .concat(&binary_repr(self.operation.index() as u64, OPERATION_BITS).expect("fits"))
    }

    pub fn from_bits(bits: &BitVector) -> Option<Self> {
        if bits.width() != RESOURCE_ID_BITS + OPERATION_BITS {
            return None;
        }
        let resource_id = bits.read_uint(0, RESOURCE_ID_BITS)? as ResourceId;
        let op = bits.read_uint(RESOURCE_ID_BITS, OPERATION_BITS)? as usize;
        Some(RequestInfo {
            resource_id,
            operation: Operation::from_index(op)?,
        })
    }
}

/// Admin-signed registration of a user and the attributes the decision
/// model reads for them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupTx {
    pub admin_pk: PublicKey,
    pub user_pk: PublicKey,
    pub metadata: EntityMetadata,
    pub timestamp: Timestamp,
    pub signature: Signature,
}

/// User-signed access request. Carries a fresh nonce so the same request
/// can never be admitted twice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccReqTx {
    pub user_pk: PublicKey,
    pub timestamp: Timestamp,
    pub request: RequestInfo,
    pub nonce: Nonce,
    pub signature: Signature,
}

/// Storage-signed access link, encrypted to the requesting user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkTx {
    pub recipient: PublicKey,
    pub payload: Ciphertext,
    pub signature: Signature,
}

/// Storage-signed record of a redeemed link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageTx {
    pub nonce: Nonce,
    pub timestamp: Timestamp,
    pub user_pk: PublicKey,
    pub signature: Signature,
}

/// Authentication result handed to the authorization contract. Unsigned;
/// only valid directly after the access request it was derived from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedTx {
    pub timestamp: Timestamp,
    pub user_key: Digest,
    pub user_bits: BitVector,
    pub request_bits: BitVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Setup,
    AccReq,
    Link,
    Storage,
    Verified,
}

impl std::str::FromStr for TxKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "setup" => Ok(TxKind::Setup),
            "accreq" => Ok(TxKind::AccReq),
            "link" => Ok(TxKind::Link),
            "storage" => Ok(TxKind::Storage),
            "verified" => Ok(TxKind::Verified),
            other => Err(format!("unknown transaction kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Transaction {
    Setup(SetupTx),
    AccReq(AccReqTx),
    Link(LinkTx),
    Storage(StorageTx),
    Verified(VerifiedTx),
}

const PLACEHOLDER: Signature = Signature([0u8; SIGNATURE_LEN]);

impl Transaction {
    pub fn setup(
        admin: &KeyPair,
        user_pk: PublicKey,
        metadata: EntityMetadata,
        timestamp: Timestamp,
    ) -> Self {
        let mut tx = Transaction::Setup(SetupTx {
            admin_pk: admin.public,
            user_pk,
            metadata,
            timestamp,
            signature: PLACEHOLDER,
        });
        tx.sign_with(admin);
        tx
    }

    pub fn acc_req(
        user: &KeyPair,
        request: RequestInfo,
        nonce: Nonce,
        timestamp: Timestamp,
    ) -> Self {
        let mut tx = Transaction::AccReq(AccReqTx {
            user_pk: user.public,
            timestamp,
            request,
            nonce,
            signature: PLACEHOLDER,
        });
        tx.sign_with(user);
        tx
    }

    pub fn link(storage: &KeyPair, recipient: PublicKey, payload: Ciphertext) -> Self {
        let mut tx = Transaction::Link(LinkTx {
            recipient,
            payload,
            signature: PLACEHOLDER,
        });
        tx.sign_with(storage);
        tx
    }

    pub fn storage(storage: &KeyPair, nonce: Nonce, user_pk: PublicKey, timestamp: Timestamp) -> Self {
        let mut tx = Transaction::Storage(StorageTx {
            nonce,
            timestamp,
            user_pk,
            signature: PLACEHOLDER,
        });
        tx.sign_with(storage);
        tx
    }

    fn signature_slot(&mut self) -> Option<&mut Signature> {
        match self {
            Transaction::Setup(t) => Some(&mut t.signature),
            Transaction::AccReq(t) => Some(&mut t.signature),
            Transaction::Link(t) => Some(&mut t.signature),
            Transaction::Storage(t) => Some(&mut t.signature),
            Transaction::Verified(_) => None,
        }
    }

    fn sign_with(&mut self, keys: &KeyPair) {
        let sig = keys.sign(&self.signing_bytes());
        if let Some(slot) = self.signature_slot() {
            *slot = sig;
        }
    }

    pub fn kind(&self) -> TxKind {
        match self {
            Transaction::Setup(_) => TxKind::Setup,
            Transaction::AccReq(_) => TxKind::AccReq,
            Transaction::Link(_) => TxKind::Link,
            Transaction::Storage(_) => TxKind::Storage,
            Transaction::Verified(_) => TxKind::Verified,
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self)
    }

    /// Bytes a signature commits to: the canonical form minus the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical_bytes_without(self, "signature")
    }

    pub fn digest(&self) -> Digest {
        hash(&self.canonical_bytes())
    }

    /// Clear-text timestamp, when the variant carries one.
    pub fn timestamp(&self) -> Option<Timestamp> {
        match self {
            Transaction::Setup(t) => Some(t.timestamp),
            Transaction::AccReq(t) => Some(t.timestamp),
            Transaction::Storage(t) => Some(t.timestamp),
            Transaction::Verified(t) => Some(t.timestamp),
            Transaction::Link(_) => None,
        }
    }

    /// Key whose signature this variant must carry, given the chain's
    /// authority set. `None` for unsigned variants.
    pub fn expected_signer(&self, authority: &Authority) -> Option<PublicKey> {
        match self {
            Transaction::Setup(_) => Some(authority.admin_pk),
            Transaction::AccReq(t) => Some(t.user_pk),
            Transaction::Link(_) | Transaction::Storage(_) => Some(authority.storage_pk),
            Transaction::Verified(_) => None,
        }
    }

    /// Signature check against the expected signer. Setup additionally
    /// requires the embedded admin key to be the chain's admin.
    pub fn verify_signature(&self, authority: &Authority) -> bool {
        let signature = match self {
            Transaction::Setup(t) => {
                if t.admin_pk != authority.admin_pk {
                    return false;
                }
                t.signature
            }
            Transaction::AccReq(t) => t.signature,
            Transaction::Link(t) => t.signature,
            Transaction::Storage(t) => t.signature,
            Transaction::Verified(_) => return false,
        };
        let signer = self.expected_signer(authority).expect("signed variant");
        verify_sig(&signer, &self.signing_bytes(), &signature)
    }

    /// Public key of the user this transaction concerns, when it names one.
    pub fn user_pk(&self) -> Option<PublicKey> {
        match self {
            Transaction::Setup(t) => Some(t.user_pk),
            Transaction::AccReq(t) => Some(t.user_pk),
            Transaction::Link(t) => Some(t.recipient),
            Transaction::Storage(t) => Some(t.user_pk),
            Transaction::Verified(_) => None,
        }
    }

    /// `H(pk)` of the user this transaction concerns.
    pub fn user_key(&self) -> Option<Digest> {
        match self {
            Transaction::Verified(t) => Some(t.user_key),
            other => other.user_pk().map(|pk| pk.key_hash()),
        }
    }

    pub fn resource_id(&self) -> Option<ResourceId> {
        match self {
            Transaction::AccReq(t) => Some(t.request.resource_id),
            Transaction::Verified(t) => RequestInfo::from_bits(&t.request_bits).map(|r| r.resource_id),
            _ => None,
        }
    }

    pub fn as_acc_req(&self) -> Option<&AccReqTx> {
        match self {
            Transaction::AccReq(t) => Some(t),
            _ => None,
        }
    }
}
