//! Hash primitives: 32-byte digests and the selectable hash function.
//!
//! Keccak-256 is the default everywhere; SHA-256 is available through
//! configuration since the protocol only relies on digest equality.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;

/// A 32-byte hash output. Hex encoding is lowercase, 64 chars, no prefix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DigestError {
    #[error("digest must be 64 lowercase hex characters, got {0:?}")]
    Malformed(String),
}

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, DigestError> {
        if s.len() != 2 * DIGEST_LEN || s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(DigestError::Malformed(s.to_string()));
        }
        let bytes = hex::decode(s).map_err(|_| DigestError::Malformed(s.to_string()))?;
        let mut out = [0u8; DIGEST_LEN];
        out.copy_from_slice(&bytes);
        Ok(Digest(out))
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

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// The hash function a log / contract pair is configured with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HashKind {
    #[default]
    Keccak256,
    Sha256,
}

impl HashKind {
    pub fn digest(&self, data: &[u8]) -> Digest {
        use sha3::Digest as _;
        match self {
            HashKind::Keccak256 => Digest(sha3::Keccak256::digest(data).into()),
            HashKind::Sha256 => Digest(sha2::Sha256::digest(data).into()),
        }
    }

    /// HASH(left || right), the interior-node rule.
    pub fn combine(&self, left: &Digest, right: &Digest) -> Digest {
        let mut buf = [0u8; 2 * DIGEST_LEN];
        buf[..DIGEST_LEN].copy_from_slice(&left.0);
        buf[DIGEST_LEN..].copy_from_slice(&right.0);
        self.digest(&buf)
    }
}
