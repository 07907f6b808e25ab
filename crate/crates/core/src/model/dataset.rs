//! Seeded synthetic authorization data with an ABAC-style hidden ground truth.
//!
//! Each operation is granted by three two-predicate clauses,
//! `(p0 ∧ p1) ∨ (p2 ∧ p3) ∨ (p4 ∧ p5)`, where every predicate compares one
//! user or resource attribute against a threshold.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{encode_pair, BitVector, EntityMetadata, ModelError, OperationMask, ATTRIBUTE_COUNT};

pub const PREDICATES_PER_OPERATION: usize = 6;
const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    User,
    Resource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    AtLeast,
    Below,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrPredicate {
    pub side: Side,
    pub attribute: usize,
    pub comparison: Comparison,
    pub threshold: u8,
}

impl AttrPredicate {
    pub fn holds(&self, user: &EntityMetadata, resource: &EntityMetadata) -> bool {
        let value = match self.side {
            Side::User => user.get(self.attribute),
            Side::Resource => resource.get(self.attribute),
        };
        match self.comparison {
            Comparison::AtLeast => value >= self.threshold,
            Comparison::Below => value < self.threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationRule {
    pub predicates: [AttrPredicate; PREDICATES_PER_OPERATION],
}

impl OperationRule {
    pub fn grants(&self, user: &EntityMetadata, resource: &EntityMetadata) -> bool {
        self.predicates
            .chunks(2)
            .any(|pair| pair.iter().all(|p| p.holds(user, resource)))
    }
}

/// The hidden rule set labels are drawn from, one rule per operation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rules: [OperationRule; 4],
}

impl GroundTruth {
    pub fn label(&self, user: &EntityMetadata, resource: &EntityMetadata) -> OperationMask {
        OperationMask(std::array::from_fn(|i| self.rules[i].grants(user, resource)))
    }

    fn sample(rng: &mut ChaCha20Rng) -> Self {
        let rules = std::array::from_fn(|_| OperationRule {
            predicates: std::array::from_fn(|_| AttrPredicate {
                side: if rng.gen_bool(0.5) { Side::User } else { Side::Resource },
                attribute: rng.gen_range(0..ATTRIBUTE_COUNT),
                comparison: if rng.gen_bool(0.5) {
                    Comparison::AtLeast
                } else {
                    Comparison::Below
                },
                // Keep each predicate away from trivially true/false.
                threshold: rng.gen_range(5..=11),
            }),
        });
        GroundTruth { rules }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub user_id: u64,
    pub user: EntityMetadata,
    pub resource_id: u64,
    pub resource: EntityMetadata,
    pub label: OperationMask,
    pub split: Split,
}

impl Tuple {
    pub fn input(&self) -> BitVector {
        encode_pair(&self.user, &self.resource)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub users: Vec<EntityMetadata>,
    pub resources: Vec<EntityMetadata>,
    pub ground_truth: GroundTruth,
    pub tuples: Vec<Tuple>,
}

pub const CSV_HEADER: &str =
    "user_id,u0,u1,u2,u3,u4,u5,u6,u7,resource_id,r0,r1,r2,r3,r4,r5,r6,r7,read,write,execute,own";

impl SyntheticDataset {
    pub fn train(&self) -> Vec<&Tuple> {
        self.split(Split::Train)
    }

    pub fn test(&self) -> Vec<&Tuple> {
        self.split(Split::Test)
    }

    pub fn split(&self, which: Split) -> Vec<&Tuple> {
        self.tuples.iter().filter(|t| t.split == which).collect()
    }

    /// CSV export of one split, header included.
    pub fn to_csv(&self, which: Split) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for t in self.split(which) {
            let _ = write!(out, "{}", t.user_id);
            for a in t.user.attributes() {
                let _ = write!(out, ",{a}");
            }
            let _ = write!(out, ",{}", t.resource_id);
            for a in t.resource.attributes() {
                let _ = write!(out, ",{a}");
            }
            for g in t.label.0 {
                let _ = write!(out, ",{}", g as u8);
            }
            out.push('\n');
        }
        out
    }

    /// Parses a CSV export back into tuples tagged with `split`.
    pub fn tuples_from_csv(text: &str, split: Split) -> Result<Vec<Tuple>, ModelError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            _ => return Err(ModelError::Config("missing or wrong dataset CSV header".into())),
        }
        let bad = |line: usize, what: &str| ModelError::Config(format!("line {line}: {what}"));
        let mut tuples = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.trim().split(',').collect();
            if cells.len() != 22 {
                return Err(bad(n + 2, "expected 22 columns"));
            }
            let num = |i: usize| cells[i].parse::<u64>().map_err(|_| bad(n + 2, "not an integer"));
            let attrs = |start: usize| -> Result<EntityMetadata, ModelError> {
                let mut a = [0u8; ATTRIBUTE_COUNT];
                for (k, slot) in a.iter_mut().enumerate() {
                    *slot = u8::try_from(num(start + k)?).map_err(|_| bad(n + 2, "attribute"))?;
                }
                EntityMetadata::new(a)
            };
            let mut label = OperationMask::NONE;
            for k in 0..4 {
                label.0[k] = match cells[18 + k] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad(n + 2, "label must be 0 or 1")),
                };
            }
            tuples.push(Tuple {
                user_id: num(0)?,
                user: attrs(1)?,
                resource_id: num(9)?,
                resource: attrs(10)?,
                label,
                split,
            });
        }
        Ok(tuples)
    }
}

fn random_metadata(rng: &mut ChaCha20Rng) -> EntityMetadata {
    EntityMetadata::new(std::array::from_fn(|_| rng.gen_range(0..16))).expect("in range")
}

/// Every (user, resource) pair labeled by a seeded hidden rule set, then an
/// 80/20 train/test split by seeded shuffle. Counts of zero are raised to one.
pub fn generate_dataset(n_users: usize, n_resources: usize, seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_users = n_users.max(1);
    let n_resources = n_resources.max(1);
    let users: Vec<_> = (0..n_users).map(|_| random_metadata(&mut rng)).collect();
    let resources: Vec<_> = (0..n_resources).map(|_| random_metadata(&mut rng)).collect();
    let ground_truth = GroundTruth::sample(&mut rng);

    let mut tuples = Vec::with_capacity(n_users * n_resources);
    for (u, user) in users.iter().enumerate() {
        for (r, resource) in resources.iter().enumerate() {
            tuples.push(Tuple {
                user_id: u as u64,
                user: *user,
                resource_id: r as u64,
                resource: *resource,
                label: ground_truth.label(user, resource),
                split: Split::Test,
            });
        }
    }
    tuples.shuffle(&mut rng);
    let n_train = ((tuples.len() as f64) * TRAIN_FRACTION).round() as usize;
    for t in tuples.iter_mut().take(n_train.max(1)) {
        t.split = Split::Train;
    }

    SyntheticDataset {
        users,
        resources,
        ground_truth,
        tuples,
    }
}
