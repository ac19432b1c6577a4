//! SHA-256 content digests over canonical JSON.
//!
//! Canonical here means serde_json's compact output for types whose field
//! order is fixed by declaration and whose collections are ordered sets or
//! maps. Every digest in the crate goes through this module.

use serde::Serialize;
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;

/// Lowercase hex of a zeroed digest, used as the genesis link of hash chains.
pub fn zero_hex() -> String {
    hex::encode([0u8; DIGEST_LEN])
}

pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // Serialization of these plain data types cannot fail.
    serde_json::to_vec(value).expect("canonical serialization")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&canonical_json(value))
}

/// Digest of several byte strings, each prefixed with its length.
pub fn digest_parts<'a, I>(parts: I) -> String
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}
