use serde::Serialize;

use crate::contracts::{DenialReason, Effect, PriorityRule, ResourcePattern, SubjectPattern};
use crate::crypto::{hash, Digest};
use crate::ledger::{HistoryFilter, ResourceId, TxKind};
use crate::model::{encode_pair, threshold_decide, Operation, OperationMask};

use super::{HarnessError, RequestOutcome, Verdict, World};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub height: u64,
    pub kind: TxKind,
    pub digest: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub id: u32,
    pub description: String,
    pub user: usize,
    pub resource: ResourceId,
    pub operation: Operation,
    pub expected: Verdict,
    pub observed: Verdict,
    pub pass: bool,
    pub transcript: Vec<TranscriptEntry>,
}

/// First registered, unbanned, rule-free (user, resource, op) in index
/// order whose model decision equals `allow`.
pub fn find_pair(world: &World, allow: bool, skip_users: &[usize]) -> Option<(usize, ResourceId, Operation)> {
    let rules = world.rules();
    let threshold = world.config.threshold;
    for (ui, user) in world.users.iter().enumerate() {
        let key = user.keys.public.key_hash();
        if !user.registered || skip_users.contains(&ui) || rules.is_banned(&key) {
            continue;
        }
        for (ri, resource) in world.dataset.resources.iter().enumerate() {
            let rid = ri as ResourceId;
            if rules.first_match(&key, rid).is_some() {
                continue;
            }
            let scores = world
                .model
                .infer(&encode_pair(&user.metadata, resource))
                .expect("fixed width");
            let mask = threshold_decide(&scores, threshold);
            if let Some(op) = Operation::ALL.into_iter().find(|op| mask.allows(*op) == allow) {
                return Some((ui, rid, op));
            }
        }
    }
    None
}

fn transcript(world: &World, outcome: &RequestOutcome) -> Vec<TranscriptEntry> {
    let pk = world.users[outcome.request.user].keys.public;
    let filter = HistoryFilter::User(pk);
    let mut entries = Vec::new();
    for &h in &outcome.heights {
        for tx in &world.chain.blocks()[h as usize].transactions {
            let ours = match tx.as_acc_req() {
                Some(a) => Some(a.nonce) == outcome.acc_req.as_acc_req().map(|o| o.nonce),
                None => filter.matches(tx),
            };
            if ours {
                entries.push(TranscriptEntry {
                    height: h,
                    kind: tx.kind(),
                    digest: tx.digest(),
                });
            }
        }
    }
    entries.dedup();
    entries
}

/// Set up the scenario's preconditions and run its request.
pub fn run_scenario(world: &mut World, id: u32) -> Result<ScenarioReport, HarnessError> {
    let (description, expected, (user, resource, op)) = match id {
        1 => {
            let u = world.add_unregistered_user();
            (
                "unregistered user requests a resource",
                Verdict::Denied(DenialReason::Unauthenticated),
                (u, 0, Operation::Read),
            )
        }
        2 => (
            "registered user requests an operation the model denies",
            Verdict::Denied(DenialReason::ModelDenied),
            find_pair(world, false, &[]).ok_or(HarnessError::NoPair(2))?,
        ),
        3 => {
            let pair = find_pair(world, true, &[]).ok_or(HarnessError::NoPair(3))?;
            world.inject_rule(PriorityRule {
                ordinal: 0,
                subject: SubjectPattern::User(world.users[pair.0].keys.public.key_hash()),
                resource: ResourcePattern::Id(pair.1),
                ops: OperationMask::only(pair.2),
                effect: Effect::Deny,
            })?;
            (
                "model approves but a priority rule denies",
                Verdict::Denied(DenialReason::PolicyDenied),
                pair,
            )
        }
        4 => (
            "model and priority rules both approve",
            Verdict::Allowed,
            find_pair(world, true, &[]).ok_or(HarnessError::NoPair(4))?,
        ),
        other => return Err(HarnessError::UnknownScenario(other)),
    };
    let outcome = world.run_request(user, resource, op)?;
    let content_ok = match outcome.verdict {
        Verdict::Allowed => {
            let stored = world.storage.get_resource(resource).map(|r| hash(&r.content));
            outcome.content_hash.is_some() && outcome.content_hash == stored
        }
        _ => outcome.content_hash.is_none(),
    };
    Ok(ScenarioReport {
        id,
        description: description.into(),
        user,
        resource,
        operation: op,
        expected,
        observed: outcome.verdict,
        pass: outcome.verdict == expected && content_ok,
        transcript: transcript(world, &outcome),
    })
}

pub fn run_all_scenarios(world: &mut World) -> Result<Vec<ScenarioReport>, HarnessError> {
    (1..=4).map(|id| run_scenario(world, id)).collect()
}
