//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use dlacb_core::bench::{AbacEffect, AbacPolicy, Cmp, Condition, Operand, RbacPolicy};
use dlacb_core::model::{DecisionModel, EntityMetadata, Operation};
use sha2::{Digest as _, Sha256};

/// Scalar forward pass: explicit index loops, textbook sigmoid.
pub fn forward_oracle(model: &DecisionModel, input: &[f64]) -> [f64; 4] {
    let layers = model.layers();
    let mut x: Vec<f64> = input.to_vec();
    for (li, layer) in layers.iter().enumerate() {
        let mut y = vec![0.0; layer.rows];
        for (r, out) in y.iter_mut().enumerate() {
            let mut z = layer.bias[r];
            for (c, xc) in x.iter().enumerate() {
                z += layer.weight(r, c) * xc;
            }
            *out = if li + 1 == layers.len() {
                1.0 / (1.0 + (-z).exp())
            } else if z > 0.0 {
                z
            } else {
                0.0
            };
        }
        x = y;
    }
    [x[0], x[1], x[2], x[3]]
}

fn operand(o: Operand, user: &EntityMetadata, resource: &EntityMetadata) -> i64 {
    match o {
        Operand::User(i) => user.attributes()[i] as i64,
        Operand::Resource(i) => resource.attributes()[i] as i64,
        Operand::Const(c) => c as i64,
    }
}

fn condition(c: &Condition, user: &EntityMetadata, resource: &EntityMetadata) -> bool {
    let (a, b) = (operand(c.lhs, user, resource), operand(c.rhs, user, resource));
    match c.cmp {
        Cmp::Ge => !(a < b),
        Cmp::Lt => b - a > 0,
        Cmp::Eq => a - b == 0,
        Cmp::Ne => a - b != 0,
    }
}

/// Enumerate every (role, guard) pair, keep the roles whose guards hold in
/// full, then consult their grants.
pub fn rbac_oracle(policy: &RbacPolicy, user: &EntityMetadata, resource_id: u32, op: Operation) -> bool {
    let class = (resource_id as u64 % policy.n_classes as u64) as usize;
    let mut satisfied = vec![0usize; policy.roles.len()];
    for (ri, role) in policy.roles.iter().enumerate() {
        for c in &role.guard {
            if condition(c, user, user) {
                satisfied[ri] += 1;
            }
        }
    }
    let active: Vec<usize> = (0..policy.roles.len())
        .filter(|&ri| satisfied[ri] == policy.roles[ri].guard.len())
        .collect();
    active
        .iter()
        .any(|&ri| policy.roles[ri].grants[class].0[op.index()])
}

/// Evaluate every rule completely, then take the lowest matching index.
pub fn abac_oracle(policy: &AbacPolicy, user: &EntityMetadata, resource: &EntityMetadata, op: Operation) -> bool {
    let matching: Vec<usize> = policy
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let held = r.conditions.iter().filter(|c| condition(c, user, resource)).count();
            r.ops.0[op.index()] && held == r.conditions.len()
        })
        .map(|(i, _)| i)
        .collect();
    match matching.iter().min() {
        Some(&i) => policy.rules[i].effect == AbacEffect::Permit,
        None => false,
    }
}

pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Recursive Merkle root; an odd node at any level is paired with itself.
pub fn merkle_oracle(leaves: &[[u8; 32]]) -> Option<[u8; 32]> {
    match leaves.len() {
        0 => None,
        1 => Some(leaves[0]),
        n => {
            let parents: Vec<[u8; 32]> = (0..n.div_ceil(2))
                .map(|i| {
                    let l = leaves[2 * i];
                    let r = if 2 * i + 1 < n { leaves[2 * i + 1] } else { l };
                    sha256(&[&l, &r])
                })
                .collect();
            merkle_oracle(&parents)
        }
    }
}
