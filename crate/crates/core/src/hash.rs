//! Stable 64-bit digest used for session state hashes.
//!
//! FNV-1a over the canonical JSON encoding of the hashed value. The
//! constants are the published FNV-1a 64-bit parameters, so the digest does
//! not depend on platform, compiler or std hasher seeds.

use serde::Serialize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercase 16-digit hex digest of `value`'s compact JSON form.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("hashed state serializes");
    format!("{:016x}", fnv1a64(&bytes))
}
