use sha2::{Digest, Sha256};

/// First 16 hex characters of the SHA-256 of `text`.
pub fn short_digest(text: &str) -> String {
    let mut out = hex::encode(Sha256::digest(text.as_bytes()));
    out.truncate(16);
    out
}
