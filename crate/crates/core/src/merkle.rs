//! Binary Merkle root over leaf digests.
//!
//! Interior nodes are `H(left || right)`. A layer with an odd number of
//! nodes pairs its last node with itself. A single leaf is its own root.

use crate::crypto::{hash_concat, Digest};

/// `None` for an empty leaf list.
pub fn merkle_root(leaves: &[Digest]) -> Option<Digest> {
    if leaves.is_empty() {
        return None;
    }
    let mut layer = leaves.to_vec();
    while layer.len() > 1 {
        layer = layer
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                hash_concat(&[pair[0].as_bytes(), right.as_bytes()])
            })
            .collect();
    }
    Some(layer[0])
}
