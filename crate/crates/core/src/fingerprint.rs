//! Short content fingerprints (leading 64 bits of SHA-256, hex).

use sha2::{Digest, Sha256};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn of_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes)[..8])
}

/// Fingerprint of a sequence of rows; row boundaries are part of the hash.
pub fn of_rows<'a>(rows: impl Iterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for row in rows {
        h.update((row.len() as u64).to_le_bytes());
        h.update(row);
    }
    hex(&h.finalize()[..8])
}
