//! Canonical byte form shared by every digest and signature.
//!
//! Values are rendered as JSON with lexicographically sorted object keys,
//! no insignificant whitespace, UTF-8, and byte strings as lowercase hex.
//! Key order is enforced here rather than relying on the map type that
//! `serde_json` happens to be compiled with.

use serde::Serialize;
use serde_json::Value;

/// Serialize `value` into its canonical bytes.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // Every type fed through here is a plain data struct; a failure would be
    // a programming error (non-string map keys, NaN), not a runtime condition.
    let value = serde_json::to_value(value).expect("canonical value must serialize");
    let mut out = Vec::with_capacity(256);
    write_value(&value, &mut out);
    out
}

/// Canonical bytes as a `String` (always valid UTF-8).
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("canonical JSON is UTF-8")
}

/// Canonical form of a value with one top-level field removed; used to
/// produce the bytes a signature commits to.
pub fn canonical_bytes_without<T: Serialize + ?Sized>(value: &T, field: &str) -> Vec<u8> {
    let mut value = serde_json::to_value(value).expect("canonical value must serialize");
    if let Value::Object(map) = &mut value {
        map.remove(field);
    }
    let mut out = Vec::with_capacity(256);
    write_value(&value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_) => {
            serde_json::to_writer(&mut *out, value).expect("scalar JSON write");
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, key).expect("key JSON write");
                out.push(b':');
                write_value(&map[key], out);
            }
            out.push(b'}');
        }
    }
}

/// Serde adapter rendering fixed-size byte arrays as lowercase hex.
pub mod hex_array {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        deserializer: D,
    ) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(D::Error::custom("hex must be lowercase"));
        }
        let raw = hex::decode(&s).map_err(D::Error::custom)?;
        raw.try_into()
            .map_err(|v: Vec<u8>| D::Error::custom(format!("expected {N} bytes, got {}", v.len())))
    }
}

/// Serde adapter rendering variable-length byte strings as lowercase hex.
pub mod hex_vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(D::Error::custom("hex must be lowercase"));
        }
        hex::decode(&s).map_err(D::Error::custom)
    }
}
