use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::model::{EntityMetadata, Operation, OperationMask, ATTRIBUTE_COUNT, ATTRIBUTE_LIMIT};

use super::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cmp {
    Ge,
    Lt,
    Eq,
    Ne,
}

impl Cmp {
    pub fn eval(self, a: u8, b: u8) -> bool {
        match self {
            Cmp::Ge => a >= b,
            Cmp::Lt => a < b,
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Ge => ">=",
            Cmp::Lt => "<",
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
        })
    }
}

impl FromStr for Cmp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            ">=" => Ok(Cmp::Ge),
            "<" => Ok(Cmp::Lt),
            "==" => Ok(Cmp::Eq),
            "!=" => Ok(Cmp::Ne),
            other => Err(format!("unknown comparison `{other}`")),
        }
    }
}

/// `u<i>`, `r<i>` or `#<const>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    User(usize),
    Resource(usize),
    Const(u8),
}

impl Operand {
    #[inline]
    pub fn value(self, user: &EntityMetadata, resource: &EntityMetadata) -> u8 {
        match self {
            Operand::User(i) => user.get(i),
            Operand::Resource(i) => resource.get(i),
            Operand::Const(c) => c,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::User(i) => write!(f, "u{i}"),
            Operand::Resource(i) => write!(f, "r{i}"),
            Operand::Const(c) => write!(f, "#{c}"),
        }
    }
}

impl FromStr for Operand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("bad operand `{s}`");
        let (head, rest) = s.split_at_checked(1).ok_or_else(bad)?;
        let n: usize = rest.parse().map_err(|_| bad())?;
        match head {
            "u" if n < ATTRIBUTE_COUNT => Ok(Operand::User(n)),
            "r" if n < ATTRIBUTE_COUNT => Ok(Operand::Resource(n)),
            "#" if n <= u8::MAX as usize => Ok(Operand::Const(n as u8)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Condition {
    pub lhs: Operand,
    pub cmp: Cmp,
    pub rhs: Operand,
}

impl Condition {
    #[inline]
    pub fn holds(&self, user: &EntityMetadata, resource: &EntityMetadata) -> bool {
        self.cmp.eval(self.lhs.value(user, resource), self.rhs.value(user, resource))
    }
}

fn parse_ops(s: &str) -> Result<OperationMask, String> {
    OperationMask::from_letters(s.trim())
}

/// Condition on one attribute that most values satisfy.
fn loose_condition<R: Rng>(rng: &mut R, lhs: Operand, peer: Option<Operand>) -> Condition {
    let limit = ATTRIBUTE_LIMIT;
    match rng.gen_range(0..4) {
        0 => Condition {
            lhs,
            cmp: Cmp::Ge,
            rhs: Operand::Const(rng.gen_range(0..=2)),
        },
        1 => Condition {
            lhs,
            cmp: Cmp::Lt,
            rhs: Operand::Const(rng.gen_range(limit - 2..=limit)),
        },
        2 => Condition {
            lhs,
            cmp: Cmp::Ne,
            rhs: Operand::Const(rng.gen_range(0..limit)),
        },
        _ => Condition {
            lhs,
            cmp: Cmp::Ne,
            rhs: peer.unwrap_or(Operand::Const(rng.gen_range(0..limit))),
        },
    }
}

// ---------------------------------------------------------------- RBAC

/// Role with an attribute guard and per-class grants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Role {
    pub guard: Vec<Condition>,
    pub grants: Vec<OperationMask>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RbacPolicy {
    pub n_classes: u32,
    pub roles: Vec<Role>,
}

impl RbacPolicy {
    pub fn empty(n_classes: u32) -> Self {
        RbacPolicy {
            n_classes: n_classes.max(1),
            roles: Vec::new(),
        }
    }

    pub fn class_of(&self, resource_id: u32) -> usize {
        (resource_id % self.n_classes) as usize
    }

    /// `10 * scale` roles, each guarded by `per_attr` conditions on every
    /// user attribute.
    pub fn random<R: Rng>(rng: &mut R, scale: usize, per_attr: usize, n_classes: u32) -> Self {
        let mut policy = RbacPolicy::empty(n_classes);
        for _ in 0..10 * scale {
            let mut guard = Vec::with_capacity(per_attr * ATTRIBUTE_COUNT);
            for a in 0..ATTRIBUTE_COUNT {
                for _ in 0..per_attr {
                    guard.push(loose_condition(rng, Operand::User(a), None));
                }
            }
            let grants = (0..policy.n_classes)
                .map(|_| {
                    let mut m = OperationMask::NONE;
                    for op in Operation::ALL {
                        m.set(op, rng.gen_bool(0.5));
                    }
                    m
                })
                .collect();
            policy.roles.push(Role { guard, grants });
        }
        policy
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("classes,{}\n", self.n_classes);
        for (i, role) in self.roles.iter().enumerate() {
            out.push_str(&format!("role,{i}\n"));
            for c in &role.guard {
                out.push_str(&format!("guard,{i},{},{},{}\n", c.lhs, c.cmp, c.rhs));
            }
            for (class, m) in role.grants.iter().enumerate() {
                if !m.is_empty() {
                    out.push_str(&format!("grant,{i},{class},{}\n", m.to_letters()));
                }
            }
        }
        out
    }

    /// Grammar, one record per line (`#` comments allowed):
    /// `classes,<n>` once, first; `role,<role>` (optional when the role has
    /// a guard or grant); `guard,<role>,<lhs>,<cmp>,<rhs>`;
    /// `grant,<role>,<class>,<ops>`. Roles are numbered densely from 0.
    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let mut policy: Option<RbacPolicy> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| BenchError::Policy { line: i + 1, reason };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            match (f[0], policy.as_mut()) {
                ("classes", None) if f.len() == 2 => {
                    let n: u32 = f[1].parse().map_err(|_| err(format!("bad class count `{}`", f[1])))?;
                    if n == 0 {
                        return Err(err("class count must be positive".into()));
                    }
                    policy = Some(RbacPolicy::empty(n));
                }
                ("role", Some(p)) if f.len() == 2 => {
                    role_slot(p, f[1]).map_err(err)?;
                }
                ("guard", Some(p)) if f.len() == 5 => {
                    let role = role_slot(p, f[1]).map_err(err)?;
                    let lhs: Operand = f[2].parse().map_err(err)?;
                    let rhs: Operand = f[4].parse().map_err(err)?;
                    if matches!(lhs, Operand::Resource(_)) || matches!(rhs, Operand::Resource(_)) {
                        return Err(err("role guards may only read user attributes".into()));
                    }
                    let cmp = f[3].parse().map_err(err)?;
                    p.roles[role].guard.push(Condition { lhs, cmp, rhs });
                }
                ("grant", Some(p)) if f.len() == 4 => {
                    let role = role_slot(p, f[1]).map_err(err)?;
                    let class: usize = f[2].parse().map_err(|_| err(format!("bad class `{}`", f[2])))?;
                    if class >= p.n_classes as usize {
                        return Err(err(format!("class {class} out of range")));
                    }
                    let ops = parse_ops(f[3]).map_err(err)?;
                    let g = &mut p.roles[role].grants[class];
                    *g = OperationMask(std::array::from_fn(|k| g.0[k] || ops.0[k]));
                }
                _ => return Err(err(format!("unrecognised record `{line}`"))),
            }
        }
        policy.ok_or(BenchError::Policy {
            line: 0,
            reason: "missing `classes` record".into(),
        })
    }
}

fn role_slot(p: &mut RbacPolicy, field: &str) -> Result<usize, String> {
    let role: usize = field.parse().map_err(|_| format!("bad role `{field}`"))?;
    if role > p.roles.len() {
        return Err(format!("role {role} skips role {}", p.roles.len()));
    }
    if role == p.roles.len() {
        p.roles.push(Role {
            guard: Vec::new(),
            grants: vec![OperationMask::NONE; p.n_classes as usize],
        });
    }
    Ok(role)
}

/// Some role whose guard accepts the user grants `op` on the resource's class.
pub fn rbac_check(policy: &RbacPolicy, user: &EntityMetadata, resource_id: u32, op: Operation) -> bool {
    let class = policy.class_of(resource_id);
    policy.roles.iter().any(|role| {
        role.grants[class].allows(op) && role.guard.iter().all(|c| c.holds(user, user))
    })
}

// ---------------------------------------------------------------- ABAC

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbacEffect {
    Permit,
    Deny,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbacRule {
    pub effect: AbacEffect,
    pub ops: OperationMask,
    pub conditions: Vec<Condition>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbacPolicy {
    pub rules: Vec<AbacRule>,
}

impl AbacPolicy {
    /// `10 * scale` rules with `per_attr` conditions on every resource
    /// attribute, compared against constants or user attributes.
    pub fn random<R: Rng>(rng: &mut R, scale: usize, per_attr: usize) -> Self {
        let mut rules = Vec::with_capacity(10 * scale);
        for _ in 0..10 * scale {
            let mut conditions = Vec::with_capacity(per_attr * ATTRIBUTE_COUNT);
            for a in 0..ATTRIBUTE_COUNT {
                for _ in 0..per_attr {
                    let peer = Operand::User(rng.gen_range(0..ATTRIBUTE_COUNT));
                    conditions.push(loose_condition(rng, Operand::Resource(a), Some(peer)));
                }
            }
            let mut ops = OperationMask::NONE;
            while ops.is_empty() {
                for op in Operation::ALL {
                    ops.set(op, rng.gen_bool(0.5));
                }
            }
            let effect = if rng.gen_bool(0.8) {
                AbacEffect::Permit
            } else {
                AbacEffect::Deny
            };
            rules.push(AbacRule {
                effect,
                ops,
                conditions,
            });
        }
        AbacPolicy { rules }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.rules.iter().enumerate() {
            let effect = match r.effect {
                AbacEffect::Permit => "permit",
                AbacEffect::Deny => "deny",
            };
            out.push_str(&format!("rule,{i},{effect},{}\n", r.ops.to_letters()));
            for c in &r.conditions {
                out.push_str(&format!("cond,{i},{},{},{}\n", c.lhs, c.cmp, c.rhs));
            }
        }
        out
    }

    /// Grammar: `rule,<idx>,<permit|deny>,<ops>` declares rule `idx` (dense,
    /// in order); `cond,<idx>,<lhs>,<cmp>,<rhs>` adds a conjunct to it.
    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let mut policy = AbacPolicy::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| BenchError::Policy { line: i + 1, reason };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let idx: usize = f
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("missing rule index".into()))?;
            match f[0] {
                "rule" if f.len() == 4 => {
                    if idx != policy.rules.len() {
                        return Err(err(format!("rule {idx} out of order")));
                    }
                    let effect = match f[2].to_ascii_lowercase().as_str() {
                        "permit" | "allow" => AbacEffect::Permit,
                        "deny" => AbacEffect::Deny,
                        other => return Err(err(format!("unknown effect `{other}`"))),
                    };
                    policy.rules.push(AbacRule {
                        effect,
                        ops: parse_ops(f[3]).map_err(err)?,
                        conditions: Vec::new(),
                    });
                }
                "cond" if f.len() == 5 => {
                    let rule = policy
                        .rules
                        .get_mut(idx)
                        .ok_or_else(|| err(format!("condition for undeclared rule {idx}")))?;
                    rule.conditions.push(Condition {
                        lhs: f[2].parse().map_err(err)?,
                        cmp: f[3].parse().map_err(err)?,
                        rhs: f[4].parse().map_err(err)?,
                    });
                }
                _ => return Err(err(format!("unrecognised record `{line}`"))),
            }
        }
        Ok(policy)
    }
}

/// First rule covering `op` whose conditions all hold decides; no match denies.
pub fn abac_check(
    policy: &AbacPolicy,
    user: &EntityMetadata,
    resource: &EntityMetadata,
    op: Operation,
) -> bool {
    for rule in &policy.rules {
        if rule.ops.allows(op) && rule.conditions.iter().all(|c| c.holds(user, resource)) {
            return rule.effect == AbacEffect::Permit;
        }
    }
    false
}
