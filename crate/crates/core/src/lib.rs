//! Core of an authenticated data-feed service: an append-only Merkle log
//! with sided membership and consistency proofs, a deterministic ledger
//! simulator, the authoritative and relying contract state machines, a
//! token-counting JSON parser, signed manifests, and cost benchmarks.

pub mod authoritative;
pub mod bench;
pub mod chain;
pub mod hash;
pub mod manifest;
pub mod merkle_log;
pub mod minijson;
pub mod relying;

pub use bench::default_registry;
pub use chain::{Address, Keypair, Ledger, Receipt, TimeMode, Transaction};
pub use hash::{Digest, HashKind};
pub use merkle_log::{mth_dual, MerkleLog, Side, SidedProof};
