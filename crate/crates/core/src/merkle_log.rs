//! Append-only Merkle log over raw data entries, with sided membership and
//! consistency proofs.
//!
//! The tree follows the history-tree convention: the left subtree of a range
//! of width `w` covers the largest power of two strictly smaller than `w`.
//! Leaves are `HASH(entry)` with no domain-separation prefix, so the digest
//! an on-ledger verifier computes from served bytes is exactly the leaf
//! label. Proof verification is the dual-root evaluation in [`mth_dual`]:
//! every element folds into the first accumulator, left-side elements also
//! fold into the second, which reconstructs the older root of a consistency
//! proof.

use crate::hash::{Digest, HashKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which side a proof element hashes in from. Serialized as 0 (left) / 1 (right).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Serialize for Side {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(match self {
            Side::Left => 0,
            Side::Right => 1,
        })
    }
}

impl<'de> Deserialize<'de> for Side {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Side::Left),
            1 => Ok(Side::Right),
            n => Err(serde::de::Error::custom(format!("side must be 0 or 1, got {n}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofElement {
    pub side: Side,
    pub hash: Digest,
}

/// An ordered sequence of sided digests, serving as both membership and
/// consistency proofs. For a consistency proof the first element is the
/// anchor; its side is carried in serialization but ignored by verification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SidedProof {
    pub elements: Vec<ProofElement>,
}

impl SidedProof {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn sides(&self) -> Vec<Side> {
        self.elements.iter().map(|e| e.side).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("empty data entry rejected")]
    EmptyEntry,
    #[error("index {index} out of range for log of size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("old size {old_size} has no consistency proof in a log of size {size}")]
    BadOldSize { old_size: u64, size: u64 },
    #[error("proof empty and no leaf supplied")]
    EmptyProof,
}

/// Largest power of two strictly less than `n`; `n` must be >= 2.
fn split_point(n: u64) -> u64 {
    debug_assert!(n >= 2);
    1 << (63 - (n - 1).leading_zeros())
}

/// The append-only tamper-evident entry store.
///
/// Interior hashes of complete power-of-two subtrees are cached per level;
/// partial ranges on the right spine are folded from those on demand, so an
/// append touches O(log n) cached nodes.
#[derive(Clone, Debug)]
pub struct MerkleLog {
    hash: HashKind,
    entries: Vec<Vec<u8>>,
    // levels[j][i] = hash of leaf range [i * 2^j, (i+1) * 2^j)
    levels: Vec<Vec<Digest>>,
}

impl MerkleLog {
    pub fn new(hash: HashKind) -> Self {
        MerkleLog {
            hash,
            entries: Vec::new(),
            levels: Vec::new(),
        }
    }

    pub fn hash_kind(&self) -> HashKind {
        self.hash
    }

    pub fn size(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn entry(&self, index: u64) -> Option<&[u8]> {
        self.entries.get(index as usize).map(|e| e.as_slice())
    }

    /// Appends one entry and returns the new size and root.
    pub fn append(&mut self, data: &[u8]) -> Result<(u64, Digest), MerkleError> {
        if data.is_empty() {
            return Err(MerkleError::EmptyEntry);
        }
        let leaf = self.hash.digest(data);
        self.entries.push(data.to_vec());
        if self.levels.is_empty() {
            self.levels.push(Vec::new());
        }
        self.levels[0].push(leaf);
        let n = self.entries.len() as u64;
        // Fold newly completed subtrees upward.
        let mut j = 0;
        while n % (1 << (j + 1)) == 0 {
            let below = &self.levels[j];
            let i = below.len() - 2;
            let node = self.hash.combine(&below[i], &below[i + 1]);
            if self.levels.len() == j + 1 {
                self.levels.push(Vec::new());
            }
            self.levels[j + 1].push(node);
            j += 1;
        }
        Ok((n, self.root().expect("non-empty log has a root")))
    }

    pub fn root(&self) -> Option<Digest> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.node(0, self.size()))
        }
    }

    /// Root of the first `size` entries, i.e. the root of an earlier snapshot.
    pub fn root_at(&self, size: u64) -> Option<Digest> {
        if size == 0 || size > self.size() {
            None
        } else {
            Some(self.node(0, size))
        }
    }

    /// Hash of leaf range [lo, hi). Callers must keep hi <= size.
    fn node(&self, lo: u64, hi: u64) -> Digest {
        debug_assert!(lo < hi && hi <= self.size());
        let w = hi - lo;
        if w.is_power_of_two() && lo % w == 0 {
            let j = w.trailing_zeros() as usize;
            return self.levels[j][(lo >> j) as usize];
        }
        let k = split_point(w);
        self.hash
            .combine(&self.node(lo, lo + k), &self.node(lo + k, hi))
    }

    /// Sided path from leaf `index` to the current root, leaf-to-root order.
    pub fn membership_proof(&self, index: u64) -> Result<SidedProof, MerkleError> {
        let size = self.size();
        if index >= size {
            return Err(MerkleError::IndexOutOfRange { index, size });
        }
        let mut elements = Vec::new();
        self.path(index, 0, size, &mut elements);
        Ok(SidedProof { elements })
    }

    fn path(&self, index: u64, lo: u64, hi: u64, out: &mut Vec<ProofElement>) {
        if hi - lo == 1 {
            return;
        }
        let k = split_point(hi - lo);
        if index < lo + k {
            self.path(index, lo, lo + k, out);
            out.push(ProofElement {
                side: Side::Right,
                hash: self.node(lo + k, hi),
            });
        } else {
            self.path(index, lo + k, hi, out);
            out.push(ProofElement {
                side: Side::Left,
                hash: self.node(lo, lo + k),
            });
        }
    }

    /// Proof that the current log extends its `old_size`-entry snapshot.
    ///
    /// The first element is the anchor; it carries side LEFT in serialization
    /// and verification ignores it. When `old_size` is a power of two the
    /// anchor is the old root itself.
    pub fn consistency_proof(&self, old_size: u64) -> Result<SidedProof, MerkleError> {
        let size = self.size();
        if old_size == 0 || old_size >= size {
            return Err(MerkleError::BadOldSize { old_size, size });
        }
        let mut elements = Vec::new();
        self.subproof(old_size, 0, size, &mut elements);
        Ok(SidedProof { elements })
    }

    fn subproof(&self, m: u64, lo: u64, hi: u64, out: &mut Vec<ProofElement>) {
        if hi - lo == m {
            out.push(ProofElement {
                side: Side::Left,
                hash: self.node(lo, hi),
            });
            return;
        }
        let k = split_point(hi - lo);
        if m <= k {
            self.subproof(m, lo, lo + k, out);
            out.push(ProofElement {
                side: Side::Right,
                hash: self.node(lo + k, hi),
            });
        } else {
            self.subproof(m - k, lo + k, hi, out);
            out.push(ProofElement {
                side: Side::Left,
                hash: self.node(lo, lo + k),
            });
        }
    }
}

/// Dual-root proof evaluation.
///
/// Both accumulators are seeded with `leaf` when present, otherwise with the
/// first proof element (the anchor). Every remaining element folds into
/// `hash_x`; left-side elements also fold into `hash_y`. For a membership
/// proof only `hash_x` is meaningful; for a consistency proof `hash_x` is
/// the new root and `hash_y` the old one.
pub fn mth_dual(
    hash: HashKind,
    proof: &SidedProof,
    leaf: Option<Digest>,
) -> Result<(Digest, Digest), MerkleError> {
    let mut ops = 0;
    mth_dual_counted(hash, proof, leaf, &mut ops)
}

/// [`mth_dual`] with an externally owned hash-operation counter, so contract
/// handlers can report verification cost in their receipts.
pub fn mth_dual_counted(
    hash: HashKind,
    proof: &SidedProof,
    leaf: Option<Digest>,
    hash_ops: &mut u64,
) -> Result<(Digest, Digest), MerkleError> {
    let (seed, start) = match leaf {
        Some(l) => (l, 0),
        None => match proof.elements.first() {
            Some(e) => (e.hash, 1),
            None => return Err(MerkleError::EmptyProof),
        },
    };
    let mut hash_x = seed;
    let mut hash_y = seed;
    for e in &proof.elements[start..] {
        match e.side {
            Side::Right => {
                hash_x = hash.combine(&hash_x, &e.hash);
                *hash_ops += 1;
            }
            Side::Left => {
                hash_x = hash.combine(&e.hash, &hash_x);
                hash_y = hash.combine(&e.hash, &hash_y);
                *hash_ops += 2;
            }
        }
    }
    Ok((hash_x, hash_y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_with(n: u64) -> MerkleLog {
        let mut log = MerkleLog::new(HashKind::Keccak256);
        for i in 0..n {
            log.append(format!("d{i}").as_bytes()).unwrap();
        }
        log
    }

    fn h(data: &[u8]) -> Digest {
        HashKind::Keccak256.digest(data)
    }

    fn c(l: &Digest, r: &Digest) -> Digest {
        HashKind::Keccak256.combine(l, r)
    }

    #[test]
    fn single_leaf_root_is_leaf_hash() {
        let mut log = MerkleLog::new(HashKind::Keccak256);
        let (n, root) = log.append(b"hello").unwrap();
        assert_eq!(n, 1);
        assert_eq!(root, h(b"hello"));
    }

    #[test]
    fn empty_entry_rejected() {
        let mut log = MerkleLog::new(HashKind::Keccak256);
        assert_eq!(log.append(b""), Err(MerkleError::EmptyEntry));
        assert_eq!(log.size(), 0);
    }

    #[test]
    fn eight_leaf_root_has_balanced_shape() {
        let log = log_with(8);
        let leaf = |i: u64| h(format!("d{i}").as_bytes());
        let h01 = c(&leaf(0), &leaf(1));
        let h23 = c(&leaf(2), &leaf(3));
        let h45 = c(&leaf(4), &leaf(5));
        let h67 = c(&leaf(6), &leaf(7));
        let h0123 = c(&h01, &h23);
        let h4567 = c(&h45, &h67);
        assert_eq!(log.root().unwrap(), c(&h0123, &h4567));
    }

    #[test]
    fn five_leaf_root_is_unbalanced() {
        let log = log_with(5);
        let leaf = |i: u64| h(format!("d{i}").as_bytes());
        let h0123 = c(&c(&leaf(0), &leaf(1)), &c(&leaf(2), &leaf(3)));
        assert_eq!(log.root().unwrap(), c(&h0123, &leaf(4)));
    }

    #[test]
    fn membership_sides_for_leaf2_of_5() {
        // The worked example: proof for d2 in a 5-leaf log is {h3_R, h01_L, h4_R}.
        let log = log_with(5);
        let proof = log.membership_proof(2).unwrap();
        assert_eq!(proof.sides(), vec![Side::Right, Side::Left, Side::Right]);
        let leaf = |i: u64| h(format!("d{i}").as_bytes());
        assert_eq!(proof.elements[0].hash, leaf(3));
        assert_eq!(proof.elements[1].hash, c(&leaf(0), &leaf(1)));
        assert_eq!(proof.elements[2].hash, leaf(4));
    }

    #[test]
    fn membership_of_single_leaf_is_empty() {
        let log = log_with(1);
        assert!(log.membership_proof(0).unwrap().is_empty());
    }

    #[test]
    fn membership_out_of_range() {
        let log = log_with(3);
        assert!(matches!(
            log.membership_proof(3),
            Err(MerkleError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn consistency_1_to_2_contains_old_root() {
        let log = log_with(2);
        let proof = log.consistency_proof(1).unwrap();
        assert_eq!(proof.len(), 2);
        assert_eq!(proof.elements[0].hash, h(b"d0"));
        assert_eq!(proof.elements[1].side, Side::Right);
        assert_eq!(proof.elements[1].hash, h(b"d1"));
        let (new_root, old_root) = mth_dual(HashKind::Keccak256, &proof, None).unwrap();
        assert_eq!(new_root, log.root().unwrap());
        assert_eq!(old_root, h(b"d0"));
    }

    #[test]
    fn consistency_5_to_8_matches_worked_example() {
        // proof_cons = {h4_L, h5_R, h67_R, h0123_L}
        let log = log_with(8);
        let proof = log.consistency_proof(5).unwrap();
        let leaf = |i: u64| h(format!("d{i}").as_bytes());
        let h67 = c(&leaf(6), &leaf(7));
        let h0123 = c(&c(&leaf(0), &leaf(1)), &c(&leaf(2), &leaf(3)));
        assert_eq!(
            proof.sides(),
            vec![Side::Left, Side::Right, Side::Right, Side::Left]
        );
        assert_eq!(proof.elements[0].hash, leaf(4));
        assert_eq!(proof.elements[1].hash, leaf(5));
        assert_eq!(proof.elements[2].hash, h67);
        assert_eq!(proof.elements[3].hash, h0123);

        let (new_root, old_root) = mth_dual(HashKind::Keccak256, &proof, None).unwrap();
        // hash_x = H(h0123 || H(H(h4 || h5) || h67)), hash_y = H(h0123 || h4)
        assert_eq!(new_root, c(&h0123, &c(&c(&leaf(4), &leaf(5)), &h67)));
        assert_eq!(old_root, c(&h0123, &leaf(4)));
        assert_eq!(new_root, log.root().unwrap());
        assert_eq!(old_root, log.root_at(5).unwrap());
    }

    #[test]
    fn consistency_bounds_rejected() {
        let log = log_with(4);
        assert!(matches!(
            log.consistency_proof(0),
            Err(MerkleError::BadOldSize { .. })
        ));
        assert!(matches!(
            log.consistency_proof(4),
            Err(MerkleError::BadOldSize { .. })
        ));
    }

    #[test]
    fn mth_dual_empty_proof_with_leaf() {
        let l = h(b"x");
        let proof = SidedProof::default();
        assert_eq!(mth_dual(HashKind::Keccak256, &proof, Some(l)).unwrap(), (l, l));
        assert_eq!(
            mth_dual(HashKind::Keccak256, &proof, None),
            Err(MerkleError::EmptyProof)
        );
    }

    #[test]
    fn membership_verifies_all_leaves_of_16() {
        let log = log_with(16);
        let root = log.root().unwrap();
        for i in 0..16 {
            let proof = log.membership_proof(i).unwrap();
            assert_eq!(proof.len(), 4);
            let leaf = h(log.entry(i).unwrap());
            let (x, _) = mth_dual(HashKind::Keccak256, &proof, Some(leaf)).unwrap();
            assert_eq!(x, root, "leaf {i}");
        }
    }

    #[test]
    fn proof_serialization_shape() {
        let log = log_with(2);
        let proof = log.membership_proof(0).unwrap();
        let json = serde_json::to_string(&proof).unwrap();
        assert_eq!(
            json,
            format!("[{{\"side\":1,\"hash\":\"{}\"}}]", h(b"d1").to_hex())
        );
        let back: SidedProof = serde_json::from_str(&json).unwrap();
        assert_eq!(back, proof);
    }
}
