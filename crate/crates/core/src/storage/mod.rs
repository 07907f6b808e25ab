//! Resource custody, encrypted access links, redemption, and the
//! malicious-activity log.

mod log;

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{hex_array, to_canonical_bytes};
use crate::contracts::{AccessList, ContractOutput, Denial, DenialReason};
use crate::crypto::{decrypt, encrypt, gen_nonce, Ciphertext, KeyPair, Nonce, PublicKey, SecretKey};
use crate::ledger::{
    LinkTx, ResourceId, Timestamp, Transaction, DEFAULT_FRESHNESS_WINDOW,
};
use crate::model::{EntityMetadata, OperationMask};

pub use log::{
    block_merkle_root, chain_roots, counts_toward_ban, export_log, parse_log, recompute_root,
    roll_root, verify_log, verify_log_against_chain, LogVerdict, MaliciousLog, MaliciousRecord,
    DEFAULT_BAN_THRESHOLD, DEFAULT_BAN_WINDOW, MALICIOUS_ROOT_KEY,
};

pub const TOKEN_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StorageError {
    #[error("resource {0} already stored")]
    DuplicateResource(ResourceId),
    #[error("resource {0} not stored")]
    UnknownResource(ResourceId),
    #[error("decision does not grant the requested operation")]
    NotGranted,
    #[error("cannot seal an empty block of records")]
    EmptyBlock,
    #[error("log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error("link payload could not be opened")]
    Payload,
    #[error("storage state: {0}")]
    State(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub id: ResourceId,
    pub metadata: EntityMetadata,
    #[serde(with = "crate::canonical::hex_vec")]
    pub content: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessLink {
    #[serde(with = "hex_array")]
    pub token: [u8; TOKEN_LEN],
    pub resource_id: ResourceId,
    pub user_pk: PublicKey,
    #[serde(with = "ops_string")]
    pub mask: OperationMask,
    pub nonce: Nonce,
    pub expiry: Timestamp,
    pub redeemed: bool,
}

mod ops_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::OperationMask;

    pub fn serialize<S: Serializer>(m: &OperationMask, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&m.to_letters())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OperationMask, D::Error> {
        OperationMask::from_letters(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Plaintext of a Link transaction: what only the requesting user can read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkPayload {
    #[serde(with = "hex_array")]
    pub token: [u8; TOKEN_LEN],
    pub resource_id: ResourceId,
    pub nonce: Nonce,
    pub timestamp: Timestamp,
    pub expiry: Timestamp,
}

/// Decrypt a Link transaction's payload with the recipient's secret key.
pub fn open_link(secret: &SecretKey, link: &LinkTx) -> Result<LinkPayload, StorageError> {
    let plain = decrypt(secret, &link.payload).map_err(|_| StorageError::Payload)?;
    serde_json::from_slice(&plain).map_err(|_| StorageError::Payload)
}

/// Redemption attempt as recorded in the malicious log.
#[derive(Serialize)]
struct RedeemAttempt<'a> {
    kind: &'static str,
    #[serde(with = "hex_array")]
    token: &'a [u8; TOKEN_LEN],
    nonce: &'a Nonce,
    time: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Redemption {
    pub content: Vec<u8>,
    pub transaction: Transaction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageParams {
    pub link_lifetime: u64,
    pub ban_threshold: usize,
    pub ban_window: u64,
}

impl Default for StorageParams {
    fn default() -> Self {
        StorageParams {
            link_lifetime: DEFAULT_FRESHNESS_WINDOW,
            ban_threshold: DEFAULT_BAN_THRESHOLD,
            ban_window: DEFAULT_BAN_WINDOW,
        }
    }
}

/// Everything needed to resume a storage node, minus its key pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageState {
    pub resources: Vec<Resource>,
    pub links: Vec<AccessLink>,
    pub spent_nonces: BTreeSet<Nonce>,
    pub log: MaliciousLog,
    #[serde(with = "hex_array")]
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

#[derive(Clone, Debug)]
pub struct Storage {
    keys: KeyPair,
    params: StorageParams,
    resources: BTreeMap<ResourceId, Resource>,
    links: BTreeMap<[u8; TOKEN_LEN], AccessLink>,
    spent_nonces: BTreeSet<Nonce>,
    log: MaliciousLog,
    rng: ChaCha20Rng,
}

impl Storage {
    pub fn new(keys: KeyPair, params: StorageParams, seed: u64) -> Self {
        Storage {
            keys,
            params,
            resources: BTreeMap::new(),
            links: BTreeMap::new(),
            spent_nonces: BTreeSet::new(),
            log: MaliciousLog::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn params(&self) -> &StorageParams {
        &self.params
    }

    pub fn put_resource(&mut self, resource: Resource) -> Result<(), StorageError> {
        if self.resources.contains_key(&resource.id) {
            return Err(StorageError::DuplicateResource(resource.id));
        }
        self.resources.insert(resource.id, resource);
        Ok(())
    }

    pub fn get_resource(&self, id: ResourceId) -> Option<&Resource> {
        self.resources.get(&id)
    }

    pub fn resources(&self) -> impl Iterator<Item = &Resource> {
        self.resources.values()
    }

    pub fn link(&self, token: &[u8; TOKEN_LEN]) -> Option<&AccessLink> {
        self.links.get(token)
    }

    pub fn is_nonce_spent(&self, nonce: &Nonce) -> bool {
        self.spent_nonces.contains(nonce)
    }

    pub fn log(&self) -> &MaliciousLog {
        &self.log
    }

    /// Issue a single-use link for a granted decision and wrap it in a
    /// storage-signed Link transaction encrypted to `user_pk`.
    pub fn issue_link(
        &mut self,
        decision: &AccessList,
        user_pk: PublicKey,
        now: Timestamp,
    ) -> Result<Transaction, StorageError> {
        let op = decision.request.operation;
        if !decision.mask.allows(op) {
            return Err(StorageError::NotGranted);
        }
        let resource_id = decision.request.resource_id;
        if !self.resources.contains_key(&resource_id) {
            return Err(StorageError::UnknownResource(resource_id));
        }
        let mut token = [0u8; TOKEN_LEN];
        self.rng.fill_bytes(&mut token);
        let mut nonce = gen_nonce(&mut self.rng);
        while self.spent_nonces.contains(&nonce) || self.links.values().any(|l| l.nonce == nonce) {
            nonce = gen_nonce(&mut self.rng);
        }
        let expiry = now + self.params.link_lifetime;
        let payload = LinkPayload {
            token,
            resource_id,
            nonce,
            timestamp: now,
            expiry,
        };
        let ciphertext: Ciphertext = encrypt(&user_pk, &to_canonical_bytes(&payload), &mut self.rng)
            .map_err(|_| StorageError::Payload)?;
        self.links.insert(
            token,
            AccessLink {
                token,
                resource_id,
                user_pk,
                mask: OperationMask::only(op),
                nonce,
                expiry,
                redeemed: false,
            },
        );
        Ok(Transaction::link(&self.keys, user_pk, ciphertext))
    }

    /// Check-and-mark redemption. Every failure is logged as malicious.
    pub fn redeem_link(
        &mut self,
        token: &[u8; TOKEN_LEN],
        nonce: &Nonce,
        now: Timestamp,
    ) -> Result<Redemption, Denial> {
        let verdict = match self.links.get(token) {
            None => Err((DenialReason::WrongResource, None)),
            Some(link) => {
                let subject = Some(link.user_pk.key_hash());
                if link.redeemed || link.nonce != *nonce || self.spent_nonces.contains(nonce) {
                    Err((DenialReason::Replay, subject))
                } else if now > link.expiry {
                    Err((DenialReason::Stale, subject))
                } else {
                    Ok(())
                }
            }
        };
        if let Err((reason, subject)) = verdict {
            let attempt = RedeemAttempt {
                kind: "Redeem",
                token,
                nonce,
                time: now,
            };
            self.log.record(
                to_canonical_bytes(&attempt),
                subject,
                ContractOutput::new(reason, OperationMask::NONE),
                now,
            );
            return Err(Denial::new(reason));
        }
        let link = self.links.get_mut(token).expect("checked above");
        link.redeemed = true;
        self.spent_nonces.insert(*nonce);
        let content = self.resources[&link.resource_id].content.clone();
        let tx = Transaction::storage(&self.keys, *nonce, link.user_pk, now);
        Ok(Redemption {
            content,
            transaction: tx,
        })
    }

    pub fn record_malicious(
        &mut self,
        transaction: Vec<u8>,
        subject: Option<crate::crypto::Digest>,
        output: ContractOutput,
        time: Timestamp,
    ) -> u64 {
        self.log.record(transaction, subject, output, time)
    }

    /// Seal pending records under `height`; returns the new rolling root.
    pub fn seal_block(&mut self, height: u64) -> Option<crate::crypto::Digest> {
        self.log.seal(height)
    }

    pub fn check_ban_threshold(&self, user: &crate::crypto::Digest, now: Timestamp) -> bool {
        self.log
            .should_ban(user, now, self.params.ban_threshold, self.params.ban_window)
    }

    pub fn state(&self) -> StorageState {
        StorageState {
            resources: self.resources.values().cloned().collect(),
            links: self.links.values().cloned().collect(),
            spent_nonces: self.spent_nonces.clone(),
            log: self.log.clone(),
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(keys: KeyPair, params: StorageParams, state: StorageState) -> Result<Self, StorageError> {
        let mut storage = Storage {
            keys,
            params,
            resources: BTreeMap::new(),
            links: BTreeMap::new(),
            spent_nonces: state.spent_nonces,
            log: state.log,
            rng: ChaCha20Rng::from_seed(state.rng_seed),
        };
        storage.rng.set_word_pos(state.rng_word_pos);
        for r in state.resources {
            storage.put_resource(r)?;
        }
        for l in state.links {
            if !storage.resources.contains_key(&l.resource_id) {
                return Err(StorageError::State(format!("link to missing resource {}", l.resource_id)));
            }
            storage.links.insert(l.token, l);
        }
        Ok(storage)
    }

    pub fn save_state(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        std::fs::write(path, crate::canonical::to_canonical_string(&self.state()))
    }

    pub fn load_state(
        keys: KeyPair,
        params: StorageParams,
        path: impl AsRef<std::path::Path>,
    ) -> Result<Self, StorageError> {
        let text = std::fs::read_to_string(path).map_err(|e| StorageError::State(e.to_string()))?;
        let state: StorageState =
            serde_json::from_str(&text).map_err(|e| StorageError::State(e.to_string()))?;
        Storage::restore(keys, params, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::ledger::RequestInfo;
    use crate::model::{Operation, OperationScores};

    fn storage() -> Storage {
        let mut s = Storage::new(keygen(&[2; 32]), StorageParams::default(), 9);
        s.put_resource(Resource {
            id: 4,
            metadata: EntityMetadata::new([1; 8]).unwrap(),
            content: b"hello".to_vec(),
        })
        .unwrap();
        s
    }

    fn grant(op: Operation) -> AccessList {
        AccessList {
            mask: OperationMask::only(op),
            model_mask: OperationMask::only(op),
            scores: OperationScores([0.9; 4]),
            rule: None,
            request: RequestInfo {
                resource_id: 4,
                operation: op,
            },
        }
    }

    fn link_of(tx: &Transaction) -> &LinkTx {
        match tx {
            Transaction::Link(l) => l,
            _ => panic!("not a link"),
        }
    }

    #[test]
    fn duplicate_resource_rejected() {
        let mut s = storage();
        let again = s.get_resource(4).unwrap().clone();
        assert_eq!(s.put_resource(again), Err(StorageError::DuplicateResource(4)));
        assert_eq!(s.get_resource(4).unwrap().content, b"hello");
    }

    #[test]
    fn link_opens_only_for_recipient() {
        let mut s = storage();
        let user = keygen(&[5; 32]);
        let other = keygen(&[6; 32]);
        let tx = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let p = open_link(&user.secret, link_of(&tx)).unwrap();
        assert_eq!(p.expiry, 220);
        assert_eq!(open_link(&other.secret, link_of(&tx)), Err(StorageError::Payload));
    }

    #[test]
    fn nonces_distinct_per_issuance() {
        let mut s = storage();
        let user = keygen(&[5; 32]);
        let a = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let b = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let pa = open_link(&user.secret, link_of(&a)).unwrap();
        let pb = open_link(&user.secret, link_of(&b)).unwrap();
        assert_ne!(pa.nonce, pb.nonce);
        assert_ne!(pa.token, pb.token);
    }

    #[test]
    fn refuses_non_granting_decision() {
        let mut s = storage();
        let mut d = grant(Operation::Read);
        d.request.operation = Operation::Write;
        assert_eq!(
            s.issue_link(&d, keygen(&[5; 32]).public, 1),
            Err(StorageError::NotGranted)
        );
    }

    #[test]
    fn redemption_is_single_use() {
        let mut s = storage();
        let user = keygen(&[5; 32]);
        let tx = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let p = open_link(&user.secret, link_of(&tx)).unwrap();
        let ok = s.redeem_link(&p.token, &p.nonce, 110).unwrap();
        assert_eq!(ok.content, b"hello");
        assert!(matches!(ok.transaction, Transaction::Storage(ref st) if st.nonce == p.nonce));
        assert_eq!(s.redeem_link(&p.token, &p.nonce, 111).unwrap_err().reason, DenialReason::Replay);
        assert_eq!(s.log().len(), 1);
        assert_eq!(
            s.redeem_link(&[0; 32], &p.nonce, 111).unwrap_err().reason,
            DenialReason::WrongResource
        );
    }

    #[test]
    fn expired_link_is_stale() {
        let mut s = storage();
        let user = keygen(&[5; 32]);
        let tx = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let p = open_link(&user.secret, link_of(&tx)).unwrap();
        assert_eq!(s.redeem_link(&p.token, &p.nonce, 221).unwrap_err().reason, DenialReason::Stale);
    }

    #[test]
    fn concurrent_redemption_yields_one_success() {
        let mut s = storage();
        let user = keygen(&[5; 32]);
        let tx = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let p = open_link(&user.secret, link_of(&tx)).unwrap();
        let shared = std::sync::Mutex::new(s);
        let wins = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|sc| {
            for _ in 0..8 {
                sc.spawn(|| {
                    if shared.lock().unwrap().redeem_link(&p.token, &p.nonce, 101).is_ok() {
                        wins.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    }
                });
            }
        });
        assert_eq!(wins.into_inner(), 1);
        assert_eq!(shared.into_inner().unwrap().log().len(), 7);
    }

    #[test]
    fn spent_nonces_survive_restart() {
        let mut s = storage();
        let user = keygen(&[5; 32]);
        let tx = s.issue_link(&grant(Operation::Read), user.public, 100).unwrap();
        let p = open_link(&user.secret, link_of(&tx)).unwrap();
        s.redeem_link(&p.token, &p.nonce, 101).unwrap();
        s.seal_block(3);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("storage.json");
        s.save_state(&path).unwrap();
        let mut back = Storage::load_state(keygen(&[2; 32]), StorageParams::default(), &path).unwrap();
        assert!(back.is_nonce_spent(&p.nonce));
        assert_eq!(back.redeem_link(&p.token, &p.nonce, 102).unwrap_err().reason, DenialReason::Replay);

        let next_a = s.issue_link(&grant(Operation::Read), user.public, 200).unwrap();
        let mut back2 = Storage::load_state(keygen(&[2; 32]), StorageParams::default(), &path).unwrap();
        let next_b = back2.issue_link(&grant(Operation::Read), user.public, 200).unwrap();
        assert_eq!(next_a, next_b);
    }
}
