//! The authentication and authorization contracts and the priority-rule
//! store they consult.

mod rules;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::crypto::{verify_sig, Digest};
use crate::ledger::{
    is_fresh, Memory, RequestInfo, ResourceId, StateWrite, Timestamp, Transaction, VerifiedTx,
    CONTRACT_PREFIX, DEFAULT_FRESHNESS_WINDOW, RESOURCE_PREFIX,
};
use crate::model::{
    encode_pair, threshold_decide, DecisionModel, EntityMetadata, Operation, OperationMask,
    OperationScores, DEFAULT_THRESHOLD,
};

pub use rules::{
    apply_priority_rules, Effect, PriorityRule, ResourcePattern, RuleStore, SubjectPattern,
    RULES_CSV_HEADER,
};

/// What authentication hands to authorization.
pub type VerifiedPayload = VerifiedTx;

pub const RULES_KEY: &str = "contract/rules";

pub fn resource_memory_key(id: ResourceId) -> String {
    format!("{RESOURCE_PREFIX}{id}")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("duplicate rule ordinal {0}")]
    DuplicateOrdinal(i64),
    #[error("rules line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("malformed contract state under `{0}`")]
    State(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DenialReason {
    Unauthenticated,
    ModelDenied,
    PolicyDenied,
    Stale,
    WrongResource,
    /// A link or request nonce presented a second time.
    Replay,
}

impl DenialReason {
    pub const ALL: [DenialReason; 6] = [
        DenialReason::Unauthenticated,
        DenialReason::ModelDenied,
        DenialReason::PolicyDenied,
        DenialReason::Stale,
        DenialReason::WrongResource,
        DenialReason::Replay,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DenialReason::Unauthenticated => "Unauthenticated",
            DenialReason::ModelDenied => "ModelDenied",
            DenialReason::PolicyDenied => "PolicyDenied",
            DenialReason::Stale => "Stale",
            DenialReason::WrongResource => "WrongResource",
            DenialReason::Replay => "Replay",
        }
    }
}

impl fmt::Display for DenialReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DenialReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DenialReason::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown denial reason `{s}`"))
    }
}

/// Bytes of a contract decision as recorded in the malicious log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractOutput {
    pub reason: DenialReason,
    pub mask: String,
}

impl ContractOutput {
    pub fn new(reason: DenialReason, mask: OperationMask) -> Self {
        ContractOutput {
            reason,
            mask: mask.to_letters(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractParams {
    pub threshold: f64,
    pub freshness_window: u64,
}

impl Default for ContractParams {
    fn default() -> Self {
        ContractParams {
            threshold: DEFAULT_THRESHOLD,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
        }
    }
}

/// Grant mask with the inputs that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct AccessList {
    pub mask: OperationMask,
    pub model_mask: OperationMask,
    pub scores: OperationScores,
    pub rule: Option<PriorityRule>,
    pub request: RequestInfo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denial {
    pub reason: DenialReason,
    /// Final mask when authorization got as far as computing one.
    pub mask: OperationMask,
}

impl Denial {
    pub fn new(reason: DenialReason) -> Self {
        Denial {
            reason,
            mask: OperationMask::NONE,
        }
    }

    pub fn output(&self) -> ContractOutput {
        ContractOutput::new(self.reason, self.mask)
    }
}

fn user_metadata(memory: &Memory, key_hash: &Digest) -> Option<EntityMetadata> {
    let v = memory.get(&crate::ledger::user_memory_key(key_hash))?;
    serde_json::from_value::<crate::ledger::UserRecord>(v.clone())
        .ok()
        .map(|r| r.metadata)
}

pub fn resource_metadata(memory: &Memory, id: ResourceId) -> Option<EntityMetadata> {
    let v = memory.get(&resource_memory_key(id))?;
    serde_json::from_value(v.clone()).ok()
}

/// Rule store held in contract state; empty when never written.
pub fn rules_from_memory(memory: &Memory) -> Result<RuleStore, ContractError> {
    match memory.get(RULES_KEY) {
        None => Ok(RuleStore::new()),
        Some(v) => {
            let raw: RuleStore = serde_json::from_value(v.clone())
                .map_err(|_| ContractError::State(RULES_KEY.into()))?;
            RuleStore::from_parts(raw.rules().iter().copied(), raw.banned().iter().copied())
        }
    }
}

pub fn rules_state_write(rules: &RuleStore) -> StateWrite {
    StateWrite {
        key: RULES_KEY.into(),
        value: serde_json::to_value(rules).expect("rules serialize"),
    }
}

pub fn resource_state_write(id: ResourceId, metadata: &EntityMetadata) -> StateWrite {
    StateWrite {
        key: resource_memory_key(id),
        value: serde_json::to_value(metadata).expect("metadata serializes"),
    }
}

/// Registered, fresh and correctly signed by the requesting key.
pub fn access_verification(tx: &Transaction, memory: &Memory, now: Timestamp, window: u64) -> bool {
    let Transaction::AccReq(req) = tx else {
        return false;
    };
    user_metadata(memory, &req.user_pk.key_hash()).is_some()
        && is_fresh(req.timestamp, now, window)
        && verify_sig(&req.user_pk, &tx.signing_bytes(), &req.signature)
}

pub fn authenticate(
    tx: &Transaction,
    memory: &Memory,
    now: Timestamp,
    window: u64,
) -> Result<VerifiedPayload, Denial> {
    if !access_verification(tx, memory, now, window) {
        return Err(Denial::new(DenialReason::Unauthenticated));
    }
    let Transaction::AccReq(req) = tx else {
        unreachable!("access_verification accepts only AccReq");
    };
    let user_key = req.user_pk.key_hash();
    let metadata = user_metadata(memory, &user_key).expect("checked above");
    Ok(VerifiedTx {
        timestamp: req.timestamp,
        user_key,
        user_bits: metadata.encode(),
        request_bits: req.request.to_bits(),
    })
}

pub fn authorize(
    payload: &VerifiedPayload,
    memory: &Memory,
    model: &DecisionModel,
    rules: &RuleStore,
    now: Timestamp,
    params: &ContractParams,
) -> Result<AccessList, Denial> {
    if !is_fresh(payload.timestamp, now, params.freshness_window) {
        return Err(Denial::new(DenialReason::Stale));
    }
    let request = RequestInfo::from_bits(&payload.request_bits)
        .ok_or_else(|| Denial::new(DenialReason::WrongResource))?;
    let resource = resource_metadata(memory, request.resource_id)
        .ok_or_else(|| Denial::new(DenialReason::WrongResource))?;
    let user = match user_metadata(memory, &payload.user_key) {
        Some(m) if m.encode() == payload.user_bits => m,
        _ => return Err(Denial::new(DenialReason::Unauthenticated)),
    };

    let scores = model
        .infer(&encode_pair(&user, &resource))
        .expect("model input width is fixed");
    let model_mask = threshold_decide(&scores, params.threshold);
    let (mask, rule) = apply_priority_rules(model_mask, rules, &payload.user_key, request.resource_id);
    if !mask.allows(request.operation) {
        let by_policy = rule.is_some_and(|r| r.effect == Effect::Deny && r.ops.allows(request.operation));
        let reason = if by_policy {
            DenialReason::PolicyDenied
        } else {
            DenialReason::ModelDenied
        };
        return Err(Denial { reason, mask });
    }
    Ok(AccessList {
        mask,
        model_mask,
        scores,
        rule: rule.copied(),
        request,
    })
}

/// Outcome of running both contracts over one access request.
#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub verified: Option<VerifiedPayload>,
    pub result: Result<AccessList, Denial>,
}

/// Authenticate then authorize, reading rules from `memory`.
pub fn execute_request(
    tx: &Transaction,
    memory: &Memory,
    model: &DecisionModel,
    rules: &RuleStore,
    now: Timestamp,
    params: &ContractParams,
) -> Execution {
    match authenticate(tx, memory, now, params.freshness_window) {
        Err(d) => Execution {
            verified: None,
            result: Err(d),
        },
        Ok(v) => {
            let result = authorize(&v, memory, model, rules, now, params);
            Execution {
                verified: Some(v),
                result,
            }
        }
    }
}

/// True for any key the contracts own.
pub fn is_contract_key(key: &str) -> bool {
    key.starts_with(CONTRACT_PREFIX)
}

/// Requested operation of an access request, for callers holding only the tx.
pub fn requested_operation(tx: &Transaction) -> Option<Operation> {
    tx.as_acc_req().map(|a| a.request.operation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair, Nonce};
    use crate::ledger::{user_memory_key, UserRecord};
    use crate::model::Dense;

    fn memory_with(user: &KeyPair, meta: EntityMetadata, res: (ResourceId, EntityMetadata)) -> Memory {
        let mut m = Memory::new();
        m.insert(
            user_memory_key(&user.public.key_hash()),
            serde_json::to_value(UserRecord {
                public_key: user.public,
                metadata: meta,
            })
            .unwrap(),
        );
        let w = resource_state_write(res.0, &res.1);
        m.insert(w.key, w.value);
        m
    }

    /// Single-layer model whose output bias alone decides: grants read and
    /// execute, denies write and own.
    fn biased_model() -> DecisionModel {
        let mut d = Dense::zeros(4, 64);
        d.bias = vec![5.0, -5.0, 5.0, -5.0];
        DecisionModel::new(vec![d]).unwrap()
    }

    fn acc(user: &KeyPair, op: Operation, res: ResourceId, ts: Timestamp) -> Transaction {
        let req = RequestInfo {
            resource_id: res,
            operation: op,
        };
        Transaction::acc_req(user, req, Nonce([1; 16]), ts)
    }

    #[test]
    fn verification_cases() {
        let user = keygen(&[1; 32]);
        let meta = EntityMetadata::new([3; 8]).unwrap();
        let mem = memory_with(&user, meta, (4, meta));
        assert!(access_verification(&acc(&user, Operation::Read, 4, 1_000), &mem, 1_000, 120));
        let stranger = keygen(&[2; 32]);
        assert!(!access_verification(&acc(&stranger, Operation::Read, 4, 1_000), &mem, 1_000, 120));
        assert!(!access_verification(&acc(&user, Operation::Read, 4, 1_000), &mem, 1_600, 120));
    }

    #[test]
    fn authenticate_encodes_registered_metadata() {
        let user = keygen(&[1; 32]);
        let meta = EntityMetadata::new([1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let mem = memory_with(&user, meta, (4, meta));
        let v = authenticate(&acc(&user, Operation::Write, 4, 77), &mem, 80, 120).unwrap();
        assert_eq!(v.timestamp, 77);
        assert_eq!(v.user_bits, meta.encode());
        let stranger = keygen(&[2; 32]);
        assert_eq!(
            authenticate(&acc(&stranger, Operation::Write, 4, 77), &mem, 80, 120).unwrap_err().reason,
            DenialReason::Unauthenticated
        );
    }

    #[test]
    fn authorize_paths() {
        let user = keygen(&[1; 32]);
        let meta = EntityMetadata::new([0; 8]).unwrap();
        let mem = memory_with(&user, meta, (4, meta));
        let model = biased_model();
        let params = ContractParams::default();
        let run = |op, res, rules: &RuleStore, now| {
            let v = authenticate(&acc(&user, op, res, 100), &mem, 100, 120).unwrap();
            authorize(&v, &mem, &model, rules, now, &params)
        };
        let empty = RuleStore::new();

        let ok = run(Operation::Read, 4, &empty, 100).unwrap();
        assert_eq!(ok.mask.to_letters(), "rx");
        assert_eq!(ok.mask, ok.model_mask);

        assert_eq!(run(Operation::Write, 4, &empty, 100).unwrap_err().reason, DenialReason::ModelDenied);
        assert_eq!(run(Operation::Read, 9, &empty, 100).unwrap_err().reason, DenialReason::WrongResource);
        assert_eq!(run(Operation::Read, 4, &empty, 500).unwrap_err().reason, DenialReason::Stale);

        let deny_read = RuleStore::from_rules([PriorityRule {
            ordinal: 0,
            subject: SubjectPattern::Any,
            resource: ResourcePattern::Id(4),
            ops: OperationMask::only(Operation::Read),
            effect: Effect::Deny,
        }])
        .unwrap();
        let d = run(Operation::Read, 4, &deny_read, 100).unwrap_err();
        assert_eq!(d.reason, DenialReason::PolicyDenied);
        assert_eq!(d.mask.to_letters(), "x");

        let mut banned = RuleStore::new();
        banned.register_ban(user.public.key_hash());
        for op in Operation::ALL {
            assert_eq!(run(op, 4, &banned, 100).unwrap_err().reason, DenialReason::PolicyDenied);
        }
    }

    #[test]
    fn rules_survive_memory_round_trip() {
        let mut rules = RuleStore::new();
        rules.register_ban(Digest([9; 32]));
        let w = rules_state_write(&rules);
        let mut mem = Memory::new();
        assert!(rules_from_memory(&mem).unwrap().is_empty());
        mem.insert(w.key, w.value);
        assert_eq!(rules_from_memory(&mem).unwrap(), rules);
    }

    #[test]
    fn output_bytes_are_canonical() {
        let out = ContractOutput::new(DenialReason::ModelDenied, OperationMask::only(Operation::Read));
        assert_eq!(out.to_bytes(), br#"{"mask":"r","reason":"ModelDenied"}"#.to_vec());
    }
}
