//! Hashing, signatures, public-key encryption and nonces.
//!
//! * hash: SHA-256.
//! * signatures: Ed25519 over canonical message bytes.
//! * encryption: ephemeral X25519 key agreement with the recipient's key,
//!   SHA-256 key derivation, ChaCha20-Poly1305. The recipient key is the
//!   Montgomery form of the same Ed25519 public key used for signatures, so
//!   every entity carries exactly one public key.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce as AeadNonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::canonical::hex_array;

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SECRET_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const NONCE_LEN: usize = 16;

const EPHEMERAL_LEN: usize = 32;
const KDF_TAG: &[u8] = b"dlacb/link-encryption/v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed key: {0}")]
    MalformedKey(&'static str),
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// Decryption failed: wrong key, truncated input, or tampered ciphertext.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("decryption failed")]
pub struct DecryptError;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(#[serde(with = "hex_array")] pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        parse_hex_array(s).map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(#[serde(with = "hex_array")] pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        parse_hex_array(s).map(PublicKey)
    }

    /// `H(pk)`, the key under which a registered user lives in chain memory.
    pub fn key_hash(&self) -> Digest {
        hash(&self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

/// The 32-byte seed an Ed25519 signing key is expanded from.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; SECRET_KEY_LEN]);

impl SecretKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SECRET_KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::MalformedKey("secret key must be 32 bytes"))?;
        Ok(SecretKey(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        parse_hex_array(s).map(SecretKey)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; SECRET_KEY_LEN] {
        &self.0
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing_key().verifying_key().to_bytes())
    }

    fn signing_key(&self) -> SigningKey {
        SigningKey::from_bytes(&self.0)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl KeyPair {
    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.secret, message)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "hex_array")] pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ciphertext(#[serde(with = "crate::canonical::hex_vec")] pub Vec<u8>);

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.0.len())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nonce(#[serde(with = "hex_array")] pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        parse_hex_array(s).map(Nonce)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", self.to_hex())
    }
}

fn parse_hex_array<const N: usize>(s: &str) -> Result<[u8; N], CryptoError> {
    let raw = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
    raw.try_into()
        .map_err(|v: Vec<u8>| CryptoError::Hex(format!("expected {N} bytes, got {}", v.len())))
}

pub fn hash(message: &[u8]) -> Digest {
    Digest(Sha256::digest(message).into())
}

/// Hash of several byte strings joined end to end.
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

pub fn keygen(seed: &[u8; 32]) -> KeyPair {
    let secret = SecretKey(*seed);
    KeyPair {
        public: secret.public_key(),
        secret,
    }
}

pub fn sign(secret: &SecretKey, message: &[u8]) -> Signature {
    Signature(secret.signing_key().sign(message).to_bytes())
}

/// Malformed keys or signatures verify as `false`.
pub fn verify_sig(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    key.verify(message, &sig).is_ok()
}

fn derive_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &PublicKey) -> Key {
    let digest = hash_concat(&[KDF_TAG, shared, ephemeral, &recipient.0]);
    Key::clone_from_slice(digest.as_bytes())
}

/// Encrypt to the holder of `recipient`. Randomized by a fresh ephemeral key.
pub fn encrypt<R: RngCore + CryptoRng>(
    recipient: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, CryptoError> {
    let edwards = VerifyingKey::from_bytes(&recipient.0)
        .map_err(|_| CryptoError::MalformedKey("public key is not a curve point"))?;
    let their = x25519_dalek::PublicKey::from(edwards.to_montgomery().to_bytes());

    let ephemeral = x25519_dalek::StaticSecret::random_from_rng(&mut *rng);
    let ephemeral_pub = x25519_dalek::PublicKey::from(&ephemeral);
    let shared = ephemeral.diffie_hellman(&their);
    if !shared.was_contributory() {
        return Err(CryptoError::MalformedKey("low-order public key"));
    }

    // The derived key is unique per ephemeral secret, so a fixed AEAD nonce is safe.
    let cipher = ChaCha20Poly1305::new(&derive_key(
        shared.as_bytes(),
        ephemeral_pub.as_bytes(),
        recipient,
    ));
    let body = cipher
        .encrypt(AeadNonce::from_slice(&[0u8; 12]), plaintext)
        .expect("in-memory AEAD encryption does not fail");

    let mut out = Vec::with_capacity(EPHEMERAL_LEN + body.len());
    out.extend_from_slice(ephemeral_pub.as_bytes());
    out.extend_from_slice(&body);
    Ok(Ciphertext(out))
}

pub fn decrypt(secret: &SecretKey, ciphertext: &Ciphertext) -> Result<Vec<u8>, DecryptError> {
    let bytes = &ciphertext.0;
    if bytes.len() < EPHEMERAL_LEN {
        return Err(DecryptError);
    }
    let (eph, body) = bytes.split_at(EPHEMERAL_LEN);
    let eph: [u8; 32] = eph.try_into().map_err(|_| DecryptError)?;

    let ours = x25519_dalek::StaticSecret::from(secret.signing_key().to_scalar_bytes());
    let shared = ours.diffie_hellman(&x25519_dalek::PublicKey::from(eph));
    let cipher = ChaCha20Poly1305::new(&derive_key(shared.as_bytes(), &eph, &secret.public_key()));
    cipher
        .decrypt(AeadNonce::from_slice(&[0u8; 12]), body)
        .map_err(|_| DecryptError)
}

pub fn gen_nonce<R: RngCore + CryptoRng>(rng: &mut R) -> Nonce {
    let mut bytes = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut bytes);
    Nonce(bytes)
}
