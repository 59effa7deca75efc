//! The signed manifest binding a provider's web identity to its contract,
//! plus the canonical JSON serialization its signature covers.
//!
//! Canonical form: object keys sorted bytewise, no insignificant whitespace,
//! UTF-8. The signature covers exactly the canonical bytes of the "signed"
//! object; the manifest file itself is the canonical serialization of the
//! whole document, which is what gets appended as entry 0 of the log.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The fields covered by the manifest signature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSigned {
    pub url: String,
    pub sc_address: String,
    pub sc_interface: serde_json::Value,
    pub data_structure: String,
}

/// The signed descriptor a provider publishes; entry 0 of its log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub signed: ManifestSigned,
    /// Hex signature over the canonical bytes of `signed`.
    pub signature: String,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("manifest signature does not verify under the pinned key")]
    BadSignature,
}

impl Manifest {
    /// The exact bytes served at /manifest and hashed as leaf 0.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("manifest serializes");
        canonical_json_bytes(&value)
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(&self.signed).expect("manifest serializes");
        canonical_json_bytes(&value)
    }

    pub fn parse(bytes: &[u8]) -> Result<Manifest, ManifestError> {
        serde_json::from_slice(bytes).map_err(|e| ManifestError::Malformed(e.to_string()))
    }

    pub fn verify(&self, key: &VerifyingKey) -> Result<(), ManifestError> {
        let sig_bytes: [u8; 64] = hex::decode(&self.signature)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| ManifestError::Malformed("signature is not 64 hex bytes".into()))?;
        let signature = Signature::from_bytes(&sig_bytes);
        key.verify(&self.signed_bytes(), &signature)
            .map_err(|_| ManifestError::BadSignature)
    }
}

/// The TLS-certificate stand-in: a pinned signing keypair with
/// certificate-like subject metadata.
#[derive(Clone)]
pub struct IdentityCredential {
    pub subject: String,
    signing: SigningKey,
}

impl IdentityCredential {
    pub fn new(subject: &str, seed: [u8; 32]) -> Self {
        IdentityCredential {
            subject: subject.to_string(),
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate<R: rand::RngCore + rand::CryptoRng>(subject: &str, rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        IdentityCredential::new(subject, seed)
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn sign_manifest(&self, signed: ManifestSigned) -> Manifest {
        let body = canonical_json_bytes(&serde_json::to_value(&signed).expect("serializes"));
        let signature = self.signing.sign(&body);
        Manifest {
            signed,
            signature: hex::encode(signature.to_bytes()),
        }
    }
}

/// Serializes a JSON value canonically: sorted keys, no whitespace.
pub fn canonical_json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &serde_json::Value, out: &mut Vec<u8>) {
    match value {
        serde_json::Value::Null => out.extend_from_slice(b"null"),
        serde_json::Value::Bool(b) => {
            out.extend_from_slice(if *b { b"true" } else { b"false" })
        }
        serde_json::Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        serde_json::Value::String(s) => write_json_string(s, out),
        serde_json::Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_json_string(key, out);
                out.push(b':');
                write_canonical(&map[*key], out);
            }
            out.push(b'}');
        }
    }
}

fn write_json_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes())
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_signed() -> ManifestSigned {
        ManifestSigned {
            url: "https://example.com/soccer".into(),
            sc_address: "0x0000000000000000000000000000000000000001".into(),
            sc_interface: serde_json::json!([{ "name": "membership" }]),
            data_structure:
                "{id:string, local:string, visitor:string, localGoals:int, visitorGoals:int}"
                    .into(),
        }
    }

    #[test]
    fn canonical_bytes_sorted_and_compact() {
        let v = serde_json::json!({"b": 1, "a": [true, null], "c": "x\"y"});
        assert_eq!(
            canonical_json_bytes(&v),
            br#"{"a":[true,null],"b":1,"c":"x\"y"}"#.to_vec()
        );
    }

    #[test]
    fn sign_then_verify() {
        let id = IdentityCredential::new("example.com", [7u8; 32]);
        let manifest = id.sign_manifest(sample_signed());
        manifest.verify(&id.public()).unwrap();
    }

    #[test]
    fn wrong_key_rejected() {
        let id = IdentityCredential::new("example.com", [7u8; 32]);
        let other = IdentityCredential::new("evil.example", [8u8; 32]);
        let manifest = id.sign_manifest(sample_signed());
        assert!(matches!(
            manifest.verify(&other.public()),
            Err(ManifestError::BadSignature)
        ));
    }

    #[test]
    fn tampered_field_rejected() {
        let id = IdentityCredential::new("example.com", [7u8; 32]);
        let mut manifest = id.sign_manifest(sample_signed());
        manifest.signed.url = "https://evil.example/soccer".into();
        assert!(manifest.verify(&id.public()).is_err());
    }

    #[test]
    fn canonical_round_trip_is_stable() {
        let id = IdentityCredential::new("example.com", [7u8; 32]);
        let manifest = id.sign_manifest(sample_signed());
        let bytes = manifest.canonical_bytes();
        let reparsed = Manifest::parse(&bytes).unwrap();
        assert_eq!(reparsed.canonical_bytes(), bytes);
        // The outer document keeps the Listing-1 shape.
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert!(v.get("signed").is_some() && v.get("signature").is_some());
        assert!(v["signed"].get("url").is_some());
        assert!(v["signed"].get("sc_address").is_some());
        assert!(v["signed"].get("sc_interface").is_some());
        assert!(v["signed"].get("data_structure").is_some());
    }
}
