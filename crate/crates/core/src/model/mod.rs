//! The learned half of the decision engine: bit encodings of identities,
//! a small feedforward network scoring the four operations, training, the
//! weight-file format, and the synthetic authorization dataset.

mod dataset;
mod network;
mod train;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    generate_dataset, CSV_HEADER as DATASET_CSV_HEADER, AttrPredicate, Comparison, GroundTruth, OperationRule, Side, Split,
    SyntheticDataset, Tuple,
};
pub use network::{infer, DecisionModel, Dense};
pub use train::{
    accuracy, gradient_check, gradient_check_report, loss_and_gradient, train, GradientCheck,
    Optimizer, TrainConfig,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, FormatError};

/// Width of the model input: 8 user + 8 resource attributes at 4 bits each.
pub const INPUT_WIDTH: usize = 64;
pub const ATTRIBUTE_COUNT: usize = 8;
pub const ATTRIBUTE_BITS: usize = 4;
pub const ATTRIBUTE_LIMIT: u8 = 1 << ATTRIBUTE_BITS;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("value {value} does not fit in {width} bits")]
    Overflow { value: u64, width: usize },
    #[error("attribute {index} = {value} is outside [0, 16)")]
    AttributeRange { index: usize, value: u8 },
    #[error("expected {expected} attributes, got {got}")]
    AttributeCount { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training split is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
}

/// One of the four operations a request can name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Read,
    Write,
    Execute,
    Own,
}

impl Operation {
    pub const ALL: [Operation; 4] = [
        Operation::Read,
        Operation::Write,
        Operation::Execute,
        Operation::Own,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Operation> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Read => "read",
            Operation::Write => "write",
            Operation::Execute => "execute",
            Operation::Own => "own",
        }
    }

    /// Single-letter code used in rule and policy files.
    pub fn letter(self) -> char {
        ['r', 'w', 'x', 'o'][self.index()]
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read" | "r" => Ok(Operation::Read),
            "write" | "w" => Ok(Operation::Write),
            "execute" | "x" => Ok(Operation::Execute),
            "own" | "o" => Ok(Operation::Own),
            other => Err(format!("unknown operation `{other}`")),
        }
    }
}

/// Fixed-width bit string; serialized as a string of `0`/`1` characters.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector(Vec<u8>);

impl BitVector {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self, ModelError> {
        if bits.iter().any(|&b| b > 1) {
            return Err(ModelError::Dimension("bits must be 0 or 1".into()));
        }
        Ok(BitVector(bits))
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn concat(&self, other: &BitVector) -> BitVector {
        let mut bits = self.0.clone();
        bits.extend_from_slice(&other.0);
        BitVector(bits)
    }

    /// Read a big-endian unsigned integer from `range`.
    pub fn read_uint(&self, start: usize, width: usize) -> Option<u64> {
        let slice = self.0.get(start..start + width)?;
        Some(slice.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as f64).collect()
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(ModelError::Dimension(format!("invalid bit character `{c}`"))),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(BitVector)
    }
}

impl Serialize for BitVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Eight small integer attributes describing a user or a resource.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(transparent)]
pub struct EntityMetadata([u8; ATTRIBUTE_COUNT]);

impl EntityMetadata {
    pub fn new(attributes: [u8; ATTRIBUTE_COUNT]) -> Result<Self, ModelError> {
        for (index, &value) in attributes.iter().enumerate() {
            if value >= ATTRIBUTE_LIMIT {
                return Err(ModelError::AttributeRange { index, value });
            }
        }
        Ok(EntityMetadata(attributes))
    }

    pub fn from_slice(attributes: &[u8]) -> Result<Self, ModelError> {
        let arr: [u8; ATTRIBUTE_COUNT] =
            attributes
                .try_into()
                .map_err(|_| ModelError::AttributeCount {
                    expected: ATTRIBUTE_COUNT,
                    got: attributes.len(),
                })?;
        Self::new(arr)
    }

    pub fn attributes(&self) -> &[u8; ATTRIBUTE_COUNT] {
        &self.0
    }

    pub fn get(&self, index: usize) -> u8 {
        self.0[index]
    }

    /// The 32-bit encoding: each attribute as 4 big-endian bits.
    pub fn encode(&self) -> BitVector {
        let mut bits = Vec::with_capacity(ATTRIBUTE_COUNT * ATTRIBUTE_BITS);
        for &a in &self.0 {
            for shift in (0..ATTRIBUTE_BITS).rev() {
                bits.push((a >> shift) & 1);
            }
        }
        BitVector(bits)
    }
}

impl<'de> Deserialize<'de> for EntityMetadata {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = <[u8; ATTRIBUTE_COUNT]>::deserialize(deserializer)?;
        EntityMetadata::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Per-operation probabilities in `[0, 1]`, indexed by [`Operation::index`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationScores(pub [f64; 4]);

impl OperationScores {
    pub fn get(&self, op: Operation) -> f64 {
        self.0[op.index()]
    }
}

/// Grant flags for (read, write, execute, own).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct OperationMask(pub [bool; 4]);

impl OperationMask {
    pub const NONE: OperationMask = OperationMask([false; 4]);
    pub const ALL: OperationMask = OperationMask([true; 4]);

    pub fn only(op: Operation) -> Self {
        let mut m = Self::NONE;
        m.0[op.index()] = true;
        m
    }

    pub fn allows(&self, op: Operation) -> bool {
        self.0[op.index()]
    }

    pub fn set(&mut self, op: Operation, value: bool) {
        self.0[op.index()] = value;
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&g| g)
    }

    /// Letters of the granted operations, e.g. `rx`; `-` when empty.
    pub fn to_letters(&self) -> String {
        let s: String = Operation::ALL
            .iter()
            .filter(|op| self.allows(**op))
            .map(|op| op.letter())
            .collect();
        if s.is_empty() {
            "-".into()
        } else {
            s
        }
    }

    /// Parses `rwxo` letter sets, `*` for all and `-` for none.
    pub fn from_letters(s: &str) -> Result<Self, String> {
        match s {
            "*" => return Ok(Self::ALL),
            "-" | "" => return Ok(Self::NONE),
            _ => {}
        }
        let mut m = Self::NONE;
        for c in s.chars() {
            let op: Operation = c.to_string().parse()?;
            m.set(op, true);
        }
        Ok(m)
    }
}

/// Big-endian fixed-width binary expansion of `value`.
pub fn binary_repr(value: u64, width: usize) -> Result<BitVector, ModelError> {
    if width < 64 && value >> width != 0 {
        return Err(ModelError::Overflow { value, width });
    }
    let bits = (0..width)
        .rev()
        .map(|shift| if shift >= 64 { 0 } else { ((value >> shift) & 1) as u8 })
        .collect();
    Ok(BitVector(bits))
}

/// Model input for a (user, resource) pair: user attributes then resource
/// attributes, each as 4 big-endian bits.
pub fn encode_pair(user: &EntityMetadata, resource: &EntityMetadata) -> BitVector {
    user.encode().concat(&resource.encode())
}

/// `grant[i] = scores[i] >= threshold`.
pub fn threshold_decide(scores: &OperationScores, threshold: f64) -> OperationMask {
    OperationMask(scores.0.map(|s| s >= threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_repr_examples() {
        assert_eq!(binary_repr(5, 8).unwrap().to_string(), "00000101");
        assert_eq!(binary_repr(0, 8).unwrap().to_string(), "00000000");
        assert_eq!(binary_repr(255, 8).unwrap().to_string(), "11111111");
        assert_eq!(
            binary_repr(256, 8),
            Err(ModelError::Overflow { value: 256, width: 8 })
        );
        assert_eq!(binary_repr(u64::MAX, 64).unwrap().width(), 64);
    }

    #[test]
    fn encode_pair_examples() {
        let zero = EntityMetadata::new([0; 8]).unwrap();
        assert_eq!(encode_pair(&zero, &zero).to_string(), "0".repeat(64));

        let full = EntityMetadata::new([15; 8]).unwrap();
        assert_eq!(
            encode_pair(&full, &zero).to_string(),
            format!("{}{}", "1".repeat(32), "0".repeat(32))
        );

        let user = EntityMetadata::new([1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let res = EntityMetadata::new([8, 7, 6, 5, 4, 3, 2, 1]).unwrap();
        let expected: String = user
            .attributes()
            .iter()
            .chain(res.attributes())
            .map(|&a| binary_repr(a as u64, 4).unwrap().to_string())
            .collect();
        assert_eq!(encode_pair(&user, &res).to_string(), expected);
    }

    #[test]
    fn metadata_range_is_enforced() {
        assert_eq!(
            EntityMetadata::new([0, 0, 16, 0, 0, 0, 0, 0]),
            Err(ModelError::AttributeRange { index: 2, value: 16 })
        );
        assert!(EntityMetadata::from_slice(&[1, 2, 3]).is_err());
        assert!(serde_json::from_str::<EntityMetadata>("[0,0,0,0,0,0,0,99]").is_err());
    }

    #[test]
    fn threshold_examples() {
        let m = threshold_decide(&OperationScores([0.9, 0.1, 0.5, 0.49]), 0.5);
        assert_eq!(m, OperationMask([true, false, true, false]));
        assert_eq!(threshold_decide(&OperationScores([0.0; 4]), 0.5), OperationMask::NONE);
        assert_eq!(threshold_decide(&OperationScores([1.0; 4]), 0.5), OperationMask::ALL);
    }

    #[test]
    fn mask_letters_round_trip() {
        for bits in 0..16u8 {
            let m = OperationMask([bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0]);
            assert_eq!(OperationMask::from_letters(&m.to_letters()).unwrap(), m);
        }
        assert_eq!(OperationMask::from_letters("*").unwrap(), OperationMask::ALL);
        assert!(OperationMask::from_letters("rq").is_err());
    }

    #[test]
    fn bitvector_reads_back_integers() {
        let v = binary_repr(0xabcd, 16).unwrap().concat(&binary_repr(2, 2).unwrap());
        assert_eq!(v.read_uint(0, 16), Some(0xabcd));
        assert_eq!(v.read_uint(16, 2), Some(2));
        assert_eq!(v.read_uint(17, 2), None);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<BitVector>(&json).unwrap(), v);
    }
}
