//! Content hashes in git object style: SHA-256 over `blob <len>\0<bytes>`.

use alloc::format;
use alloc::string::String;

use sha2::{Digest, Sha256};

use crate::instances::ProblemInstance;

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Canonical JSON encoding of an instance.
pub fn instance_bytes(inst: &ProblemInstance) -> alloc::vec::Vec<u8> {
    serde_json::to_vec(inst).expect("instances always serialize")
}

pub fn instance_hash(inst: &ProblemInstance) -> String {
    content_hash(&instance_bytes(inst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_blob_matches_git_sha256() {
        // `git hash-object --object-format=sha256 /dev/null`
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
