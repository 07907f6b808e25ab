use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::{hex_vec, to_canonical_bytes, to_canonical_string};
use crate::contracts::{ContractOutput, DenialReason};
use crate::crypto::{hash, hash_concat, Digest};
use crate::ledger::{Block, Timestamp};
use crate::merkle::merkle_root;

use super::StorageError;

/// Contract-state key mirroring the rolling root.
pub const MALICIOUS_ROOT_KEY: &str = "contract/malicious_root";

pub const DEFAULT_BAN_THRESHOLD: usize = 3;
pub const DEFAULT_BAN_WINDOW: u64 = 600;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaliciousRecord {
    pub sequence: u64,
    /// Block whose processing produced this record.
    pub height: u64,
    /// `H(pk)` of the user the record is attributed to, when known.
    pub subject: Option<Digest>,
    #[serde(with = "hex_vec")]
    pub transaction: Vec<u8>,
    pub output: ContractOutput,
    pub time: Timestamp,
}

impl MaliciousRecord {
    pub fn digest(&self) -> Digest {
        hash(&to_canonical_bytes(self))
    }
}

/// Merkle root over the digests of one block's records.
pub fn block_merkle_root(records: &[MaliciousRecord]) -> Result<Digest, StorageError> {
    let leaves: Vec<Digest> = records.iter().map(MaliciousRecord::digest).collect();
    merkle_root(&leaves).ok_or(StorageError::EmptyBlock)
}

/// `H(prev || Mblock || outputs)` where `outputs` concatenates each
/// record's contract output bytes in record order.
pub fn roll_root(prev: &Digest, records: &[MaliciousRecord]) -> Result<Digest, StorageError> {
    let mblock = block_merkle_root(records)?;
    let outputs: Vec<u8> = records.iter().flat_map(|r| r.output.to_bytes()).collect();
    Ok(hash_concat(&[prev.as_bytes(), mblock.as_bytes(), &outputs]))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogVerdict {
    Verified,
    Compromised { first_divergent_height: Option<u64> },
}

impl LogVerdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, LogVerdict::Verified)
    }
}

fn group_by_height(records: &[MaliciousRecord]) -> BTreeMap<u64, Vec<MaliciousRecord>> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.height, r.sequence));
    let mut groups: BTreeMap<u64, Vec<MaliciousRecord>> = BTreeMap::new();
    for r in sorted {
        groups.entry(r.height).or_default().push(r);
    }
    groups
}

/// Rolling root over all records, grouped by block height.
pub fn recompute_root(records: &[MaliciousRecord]) -> Digest {
    let mut root = Digest::ZERO;
    for group in group_by_height(records).values() {
        root = roll_root(&root, group).expect("groups are nonempty");
    }
    root
}

/// Compare the recomputed root with the single stored mirror.
pub fn verify_log(records: &[MaliciousRecord], stored_root: &Digest) -> LogVerdict {
    if recompute_root(records) == *stored_root {
        LogVerdict::Verified
    } else {
        LogVerdict::Compromised {
            first_divergent_height: None,
        }
    }
}

/// Per-block mirrors written into contract state, in chain order.
pub fn chain_roots(blocks: &[Block]) -> Vec<(u64, Digest)> {
    blocks
        .iter()
        .flat_map(|b| {
            b.state_writes
                .iter()
                .filter(|w| w.key == MALICIOUS_ROOT_KEY)
                .filter_map(move |w| {
                    let hex = w.value.as_str()?;
                    Some((b.height, Digest::from_hex(hex).ok()?))
                })
        })
        .collect()
}

/// Replay the log block by block against the roots recorded on chain and
/// report the first height where they disagree.
pub fn verify_log_against_chain(records: &[MaliciousRecord], roots: &[(u64, Digest)]) -> LogVerdict {
    let groups = group_by_height(records);
    let onchain: BTreeMap<u64, Digest> = roots.iter().copied().collect();
    let mut heights: Vec<u64> = groups.keys().chain(onchain.keys()).copied().collect();
    heights.sort_unstable();
    heights.dedup();

    let mut seq_seen = std::collections::HashSet::new();
    let mut root = Digest::ZERO;
    for h in heights {
        let divergent = LogVerdict::Compromised {
            first_divergent_height: Some(h),
        };
        let (Some(group), Some(expected)) = (groups.get(&h), onchain.get(&h)) else {
            return divergent;
        };
        if !group.iter().all(|r| seq_seen.insert(r.sequence)) {
            return divergent;
        }
        root = roll_root(&root, group).expect("groups are nonempty");
        if root != *expected {
            return divergent;
        }
    }
    LogVerdict::Verified
}

pub fn export_log(records: &[MaliciousRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_canonical_string(r));
        out.push('\n');
    }
    out
}

/// Parse a JSON-lines export; every line must be canonical.
pub fn parse_log(text: &str) -> Result<Vec<MaliciousRecord>, StorageError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let rec: MaliciousRecord = serde_json::from_str(line).map_err(|e| StorageError::Log {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if to_canonical_string(&rec) != line {
                return Err(StorageError::Log {
                    line: i + 1,
                    reason: "line is not in canonical form".into(),
                });
            }
            Ok(rec)
        })
        .collect()
}

/// Denials that count toward a ban.
pub fn counts_toward_ban(reason: DenialReason) -> bool {
    matches!(
        reason,
        DenialReason::WrongResource | DenialReason::ModelDenied | DenialReason::PolicyDenied
    )
}

/// Append-only record list with the rolling root over sealed blocks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaliciousLog {
    records: Vec<MaliciousRecord>,
    pending: Vec<MaliciousRecord>,
    root: Digest,
    next_sequence: u64,
}

impl MaliciousLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sealed records, in sequence order.
    pub fn records(&self) -> &[MaliciousRecord] {
        &self.records
    }

    pub fn pending(&self) -> &[MaliciousRecord] {
        &self.pending
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn len(&self) -> usize {
        self.records.len() + self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Queue a record for the block being built; returns its sequence number.
    pub fn record(
        &mut self,
        transaction: Vec<u8>,
        subject: Option<Digest>,
        output: ContractOutput,
        time: Timestamp,
    ) -> u64 {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.pending.push(MaliciousRecord {
            sequence,
            height: 0,
            subject,
            transaction,
            output,
            time,
        });
        sequence
    }

    /// Attach pending records to `height` and roll the root. `None` when
    /// there was nothing to seal.
    pub fn seal(&mut self, height: u64) -> Option<Digest> {
        if self.pending.is_empty() {
            return None;
        }
        let mut group = std::mem::take(&mut self.pending);
        for r in &mut group {
            r.height = height;
        }
        self.root = roll_root(&self.root, &group).expect("nonempty");
        self.records.extend(group);
        Some(self.root)
    }

    /// At least `threshold` counted denials for `user` with
    /// `now - time <= window`.
    pub fn should_ban(&self, user: &Digest, now: Timestamp, threshold: usize, window: u64) -> bool {
        self.records
            .iter()
            .chain(&self.pending)
            .filter(|r| r.subject.as_ref() == Some(user))
            .filter(|r| counts_toward_ban(r.output.reason))
            .filter(|r| r.time <= now && now - r.time <= window)
            .count()
            >= threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OperationMask;

    fn rec(seq: u64, height: u64, reason: DenialReason) -> MaliciousRecord {
        MaliciousRecord {
            sequence: seq,
            height,
            subject: Some(Digest([7; 32])),
            transaction: vec![seq as u8; 5],
            output: ContractOutput::new(reason, OperationMask::NONE),
            time: 100 + seq,
        }
    }

    fn leaf(r: &MaliciousRecord) -> Vec<u8> {
        hash(&to_canonical_bytes(r)).0.to_vec()
    }

    #[test]
    fn block_roots_by_hand() {
        let r: Vec<_> = (0..3).map(|i| rec(i, 1, DenialReason::ModelDenied)).collect();
        assert!(matches!(block_merkle_root(&[]), Err(StorageError::EmptyBlock)));
        assert_eq!(block_merkle_root(&r[..1]).unwrap(), r[0].digest());
        let n01 = hash(&[leaf(&r[0]), leaf(&r[1])].concat());
        assert_eq!(block_merkle_root(&r[..2]).unwrap(), n01);
        let n22 = hash(&[leaf(&r[2]), leaf(&r[2])].concat());
        let root3 = hash(&[n01.0.to_vec(), n22.0.to_vec()].concat());
        assert_eq!(block_merkle_root(&r).unwrap(), root3);
    }

    #[test]
    fn roll_root_matches_direct_hash() {
        let r = vec![rec(0, 1, DenialReason::Stale)];
        let mut buf = vec![0u8; 32];
        buf.extend_from_slice(&r[0].digest().0);
        buf.extend_from_slice(&r[0].output.to_bytes());
        assert_eq!(roll_root(&Digest::ZERO, &r).unwrap(), hash(&buf));
        assert_eq!(recompute_root(&[]), Digest::ZERO);
    }

    #[test]
    fn block_order_matters() {
        let blocks: Vec<Vec<MaliciousRecord>> = (0..3)
            .map(|b| vec![rec(b, b + 1, DenialReason::WrongResource)])
            .collect();
        let roll = |order: &[usize]| {
            order
                .iter()
                .fold(Digest::ZERO, |acc, &i| roll_root(&acc, &blocks[i]).unwrap())
        };
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let roots: std::collections::HashSet<Digest> = perms.iter().map(|p| roll(p)).collect();
        assert_eq!(roots.len(), 6);
    }

    #[test]
    fn seal_and_verify() {
        let mut log = MaliciousLog::new();
        assert_eq!(log.seal(1), None);
        let out = ContractOutput::new(DenialReason::ModelDenied, OperationMask::NONE);
        assert_eq!(log.record(vec![1], None, out.clone(), 10), 0);
        assert_eq!(log.record(vec![2], None, out.clone(), 10), 1);
        let r1 = log.seal(3).unwrap();
        log.record(vec![3], None, out, 11);
        let r2 = log.seal(5).unwrap();
        assert_eq!(log.records().iter().map(|r| r.height).collect::<Vec<_>>(), vec![3, 3, 5]);
        assert_eq!(recompute_root(log.records()), r2);
        assert!(verify_log(log.records(), &r2).is_verified());
        assert!(verify_log_against_chain(log.records(), &[(3, r1), (5, r2)]).is_verified());

        let mut tampered = log.records().to_vec();
        tampered[2].transaction[0] ^= 1;
        assert_eq!(
            verify_log_against_chain(&tampered, &[(3, r1), (5, r2)]),
            LogVerdict::Compromised {
                first_divergent_height: Some(5)
            }
        );
        tampered = log.records().to_vec();
        tampered.pop();
        assert!(!verify_log(&tampered, &r2).is_verified());
        assert_eq!(
            verify_log_against_chain(&tampered, &[(3, r1), (5, r2)]),
            LogVerdict::Compromised {
                first_divergent_height: Some(5)
            }
        );
    }

    #[test]
    fn export_round_trip_and_canonical_check() {
        let recs: Vec<_> = (0..3).map(|i| rec(i, 2, DenialReason::Replay)).collect();
        let text = export_log(&recs);
        assert_eq!(parse_log(&text).unwrap(), recs);
        assert!(parse_log(&text.replacen("0000", "0 000", 1)).is_err());
        assert!(parse_log(&text.replacen("\"time\"", "\"tima\"", 1)).is_err());
        assert!(parse_log("").unwrap().is_empty());
    }

    #[test]
    fn ban_window() {
        let user = Digest([7; 32]);
        let mut log = MaliciousLog::new();
        let out = ContractOutput::new(DenialReason::WrongResource, OperationMask::NONE);
        log.record(vec![], Some(user), out.clone(), 1_000);
        log.record(vec![], Some(user), out.clone(), 1_100);
        assert!(!log.should_ban(&user, 1_100, 3, 600));
        log.record(vec![], Some(user), out.clone(), 1_200);
        assert!(log.should_ban(&user, 1_200, 3, 600));
        assert!(!log.should_ban(&Digest([8; 32]), 1_200, 3, 600));

        let mut spread = MaliciousLog::new();
        for t in [0, 3_600, 7_200] {
            spread.record(vec![], Some(user), out.clone(), t);
        }
        assert!(!spread.should_ban(&user, 7_200, 3, 600));

        let mut stale_only = MaliciousLog::new();
        let stale = ContractOutput::new(DenialReason::Stale, OperationMask::NONE);
        for _ in 0..5 {
            stale_only.record(vec![], Some(user), stale.clone(), 50);
        }
        assert!(!stale_only.should_ban(&user, 50, 3, 600));
    }
}
