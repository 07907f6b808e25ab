use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::ledger::ResourceId;
use crate::model::{Operation, OperationMask};

use super::ContractError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Effect {
    Allow,
    Deny,
}

impl FromStr for Effect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ALLOW" => Ok(Effect::Allow),
            "DENY" => Ok(Effect::Deny),
            other => Err(format!("unknown effect `{other}`")),
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Allow => "ALLOW",
            Effect::Deny => "DENY",
        })
    }
}

/// `*` or the hex `H(pk)` of one user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SubjectPattern {
    Any,
    User(Digest),
}

/// `*` or one resource id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ResourcePattern {
    Any,
    Id(ResourceId),
}

impl SubjectPattern {
    pub fn matches(&self, user: &Digest) -> bool {
        match self {
            SubjectPattern::Any => true,
            SubjectPattern::User(d) => d == user,
        }
    }
}

impl ResourcePattern {
    pub fn matches(&self, id: ResourceId) -> bool {
        match self {
            ResourcePattern::Any => true,
            ResourcePattern::Id(r) => *r == id,
        }
    }
}

impl fmt::Display for SubjectPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectPattern::Any => f.write_str("*"),
            SubjectPattern::User(d) => f.write_str(&d.to_hex()),
        }
    }
}

impl fmt::Display for ResourcePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourcePattern::Any => f.write_str("*"),
            ResourcePattern::Id(id) => write!(f, "{id}"),
        }
    }
}

impl FromStr for SubjectPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "*" => Ok(SubjectPattern::Any),
            hex => Digest::from_hex(hex)
                .map(SubjectPattern::User)
                .map_err(|e| format!("bad subject `{hex}`: {e}")),
        }
    }
}

impl FromStr for ResourcePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "*" => Ok(ResourcePattern::Any),
            id => id
                .parse()
                .map(ResourcePattern::Id)
                .map_err(|_| format!("bad resource `{id}`")),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl From<$t> for String {
            fn from(p: $t) -> String {
                p.to_string()
            }
        }

        impl TryFrom<String> for $t {
            type Error = String;

            fn try_from(s: String) -> Result<Self, String> {
                s.parse()
            }
        }
    };
}

string_serde!(SubjectPattern);
string_serde!(ResourcePattern);

mod ops_letters {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::OperationMask;

    pub fn serialize<S: Serializer>(m: &OperationMask, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&m.to_letters())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OperationMask, D::Error> {
        let s = String::deserialize(d)?;
        OperationMask::from_letters(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PriorityRule {
    pub ordinal: i64,
    pub subject: SubjectPattern,
    pub resource: ResourcePattern,
    #[serde(with = "ops_letters")]
    pub ops: OperationMask,
    pub effect: Effect,
}

impl PriorityRule {
    pub fn matches(&self, user: &Digest, resource: ResourceId) -> bool {
        self.subject.matches(user) && self.resource.matches(resource)
    }

    /// Apply this rule's effect to `mask`.
    pub fn apply(&self, mut mask: OperationMask) -> OperationMask {
        for op in Operation::ALL {
            if self.ops.allows(op) {
                mask.set(op, self.effect == Effect::Allow);
            }
        }
        mask
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.ordinal,
            self.subject,
            self.resource,
            self.ops.to_letters(),
            self.effect
        )
    }
}

pub const RULES_CSV_HEADER: &str = "ordinal,subject,resource,ops,effect";

/// Priority rules in ascending ordinal order plus the set of banned users.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStore {
    rules: Vec<PriorityRule>,
    banned: BTreeSet<Digest>,
}

impl RuleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = PriorityRule>) -> Result<Self, ContractError> {
        let mut store = RuleStore::new();
        for r in rules {
            store.insert(r)?;
        }
        Ok(store)
    }

    /// Rebuild from stored parts; every banned user must have its DENY-all rule.
    pub fn from_parts(
        rules: impl IntoIterator<Item = PriorityRule>,
        banned: impl IntoIterator<Item = Digest>,
    ) -> Result<Self, ContractError> {
        let mut store = RuleStore::from_rules(rules)?;
        for user in banned {
            let covered = store.rules.iter().any(|r| {
                r.subject == SubjectPattern::User(user)
                    && r.resource == ResourcePattern::Any
                    && r.ops == OperationMask::ALL
                    && r.effect == Effect::Deny
            });
            if !covered {
                return Err(ContractError::State(format!("banned user {} has no DENY-all rule", user.to_hex())));
            }
            store.banned.insert(user);
        }
        Ok(store)
    }

    pub fn rules(&self) -> &[PriorityRule] {
        &self.rules
    }

    pub fn banned(&self) -> &BTreeSet<Digest> {
        &self.banned
    }

    pub fn is_banned(&self, user: &Digest) -> bool {
        self.banned.contains(user)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Insert keeping ordinal order; ordinals must be unique.
    pub fn insert(&mut self, rule: PriorityRule) -> Result<(), ContractError> {
        match self.rules.binary_search_by_key(&rule.ordinal, |r| r.ordinal) {
            Ok(_) => Err(ContractError::DuplicateOrdinal(rule.ordinal)),
            Err(pos) => {
                self.rules.insert(pos, rule);
                Ok(())
            }
        }
    }

    pub fn min_ordinal(&self) -> Option<i64> {
        self.rules.first().map(|r| r.ordinal)
    }

    pub fn next_ordinal(&self) -> i64 {
        self.rules.last().map_or(0, |r| r.ordinal + 1)
    }

    /// First rule matching the pair, in ordinal order.
    pub fn first_match(&self, user: &Digest, resource: ResourceId) -> Option<&PriorityRule> {
        self.rules.iter().find(|r| r.matches(user, resource))
    }

    /// Revoke every operation on every resource for `user`. Returns false
    /// when the user was already banned.
    pub fn register_ban(&mut self, user: Digest) -> bool {
        if !self.banned.insert(user) {
            return false;
        }
        let ordinal = self.min_ordinal().map_or(0, |m| m - 1);
        self.rules.insert(
            0,
            PriorityRule {
                ordinal,
                subject: SubjectPattern::User(user),
                resource: ResourcePattern::Any,
                ops: OperationMask::ALL,
                effect: Effect::Deny,
            },
        );
        true
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RULES_CSV_HEADER);
        out.push('\n');
        for r in &self.rules {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    /// Parse `ordinal,subject,resource,ops,effect` rows. A DENY-all rule for
    /// a single user on every resource marks that user as banned.
    pub fn from_csv(text: &str) -> Result<Self, ContractError> {
        let mut store = RuleStore::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line == RULES_CSV_HEADER) {
                continue;
            }
            let csv_err = |reason: String| ContractError::Csv { line: i + 1, reason };
            let fields: Vec<&str> = line.split(',').collect();
            let [ordinal, subject, resource, ops, effect] = fields[..] else {
                return Err(csv_err(format!("expected 5 fields, got {}", fields.len())));
            };
            let rule = PriorityRule {
                ordinal: ordinal
                    .trim()
                    .parse()
                    .map_err(|_| csv_err(format!("bad ordinal `{ordinal}`")))?,
                subject: subject.parse().map_err(csv_err)?,
                resource: resource.parse().map_err(csv_err)?,
                ops: OperationMask::from_letters(ops.trim()).map_err(csv_err)?,
                effect: effect.parse().map_err(csv_err)?,
            };
            if let (SubjectPattern::User(u), ResourcePattern::Any, Effect::Deny) =
                (rule.subject, rule.resource, rule.effect)
            {
                if rule.ops == OperationMask::ALL {
                    store.banned.insert(u);
                }
            }
            store.insert(rule).map_err(|e| csv_err(e.to_string()))?;
        }
        Ok(store)
    }
}

/// First-match-wins filter; returns the new mask and the rule applied.
pub fn apply_priority_rules<'a>(
    mask: OperationMask,
    rules: &'a RuleStore,
    user: &Digest,
    resource: ResourceId,
) -> (OperationMask, Option<&'a PriorityRule>) {
    match rules.first_match(user, resource) {
        Some(rule) => (rule.apply(mask), Some(rule)),
        None => (mask, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;

    fn rule(ordinal: i64, subject: SubjectPattern, ops: &str, effect: Effect) -> PriorityRule {
        PriorityRule {
            ordinal,
            subject,
            resource: ResourcePattern::Any,
            ops: OperationMask::from_letters(ops).unwrap(),
            effect,
        }
    }

    #[test]
    fn empty_store_is_identity() {
        let m = OperationMask([true, false, true, false]);
        let empty = RuleStore::new();
        let (out, r) = apply_priority_rules(m, &empty, &hash(b"u"), 4);
        assert_eq!(out, m);
        assert!(r.is_none());
    }

    #[test]
    fn allow_extends_and_deny_clears() {
        let u = hash(b"u");
        let read_only = OperationMask::only(Operation::Read);
        let allow_x = RuleStore::from_rules([rule(1, SubjectPattern::User(u), "x", Effect::Allow)]).unwrap();
        let (m, _) = apply_priority_rules(read_only, &allow_x, &u, 0);
        assert_eq!(m.to_letters(), "rx");

        let deny_r = RuleStore::from_rules([rule(1, SubjectPattern::Any, "r", Effect::Deny)]).unwrap();
        let (m, _) = apply_priority_rules(read_only, &deny_r, &u, 0);
        assert!(m.is_empty());
    }

    #[test]
    fn only_first_match_applies() {
        let u = hash(b"u");
        let store = RuleStore::from_rules([
            rule(5, SubjectPattern::Any, "r", Effect::Allow),
            rule(2, SubjectPattern::User(u), "r", Effect::Deny),
        ])
        .unwrap();
        let (m, r) = apply_priority_rules(OperationMask::ALL, &store, &u, 1);
        assert_eq!(r.unwrap().ordinal, 2);
        assert_eq!(m.to_letters(), "wxo");
    }

    #[test]
    fn duplicate_ordinals_rejected() {
        let mut s = RuleStore::new();
        s.insert(rule(1, SubjectPattern::Any, "r", Effect::Allow)).unwrap();
        assert!(matches!(
            s.insert(rule(1, SubjectPattern::Any, "w", Effect::Deny)),
            Err(ContractError::DuplicateOrdinal(1))
        ));
    }

    #[test]
    fn ban_is_idempotent_and_dominant() {
        let u = hash(b"u");
        let mut s = RuleStore::from_rules([rule(0, SubjectPattern::User(u), "*", Effect::Allow)]).unwrap();
        assert!(s.register_ban(u));
        assert!(!s.register_ban(u));
        assert_eq!(s.rules().len(), 2);
        assert_eq!(s.rules()[0].ordinal, -1);
        let (m, _) = apply_priority_rules(OperationMask::ALL, &s, &u, 9);
        assert!(m.is_empty());
        let other = hash(b"v");
        let (m, _) = apply_priority_rules(OperationMask::ALL, &s, &other, 9);
        assert_eq!(m, OperationMask::ALL);
    }

    #[test]
    fn csv_round_trip() {
        let u = hash(b"u");
        let mut s = RuleStore::from_rules([
            PriorityRule {
                ordinal: 3,
                subject: SubjectPattern::Any,
                resource: ResourcePattern::Id(12),
                ops: OperationMask::from_letters("rw").unwrap(),
                effect: Effect::Deny,
            },
            rule(7, SubjectPattern::User(u), "x", Effect::Allow),
        ])
        .unwrap();
        s.register_ban(hash(b"banned"));
        let text = s.to_csv();
        assert!(text.starts_with("ordinal,subject,resource,ops,effect\n2,"));
        assert_eq!(RuleStore::from_csv(&text).unwrap(), s);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad = "ordinal,subject,resource,ops,effect\n1,*,*,r,MAYBE\n";
        match RuleStore::from_csv(bad) {
            Err(ContractError::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(RuleStore::from_csv("1,*,*,q,DENY").is_err());
        assert!(RuleStore::from_csv("1,*,*").is_err());
    }

    #[test]
    fn json_form_is_compact() {
        let s = RuleStore::from_rules([rule(1, SubjectPattern::Any, "rw", Effect::Deny)]).unwrap();
        let v = serde_json::to_string(&s).unwrap();
        assert_eq!(
            v,
            r#"{"rules":[{"ordinal":1,"subject":"*","resource":"*","ops":"rw","effect":"DENY"}],"banned":[]}"#
        );
        assert_eq!(serde_json::from_str::<RuleStore>(&v).unwrap(), s);
    }
}
