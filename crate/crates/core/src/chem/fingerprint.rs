//! ECFP-style circular (Morgan) fingerprints.
//!
//! Hash function: MurmurHash3 x86_32 with seed [`FINGERPRINT_SEED`], applied
//! to a sequence of `u32` words serialized little-endian. Words per hash:
//!
//! * round 0: `[atomic_number, degree, formal_charge as i32 as u32, aromatic]`
//! * round r >= 1: `[r, previous_hash, code_1, hash_1, code_2, hash_2, ...]`
//!   where `(code, hash)` pairs are the neighbors' bond codes (single=1,
//!   double=2, triple=3, aromatic=4) and previous-round hashes, sorted
//!   ascending.
//!
//! Every atom hash from rounds `0..=radius` is folded into the bit vector
//! as `hash % nbits`.

use std::collections::BTreeSet;
use std::io::Cursor;

use crate::error::{Error, Result};

use super::graph::MolGraph;

pub const FINGERPRINT_SEED: u32 = 0x9747_B28C;
pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_NBITS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    nbits: usize,
    set_bits: Vec<usize>,
}

impl BitVector {
    pub fn new(nbits: usize, bits: impl IntoIterator<Item = usize>) -> Result<Self> {
        if nbits == 0 {
            return Err(Error::InvalidArgument("nbits must be positive".into()));
        }
        let set: BTreeSet<usize> = bits.into_iter().collect();
        if let Some(&max) = set.last() {
            if max >= nbits {
                return Err(Error::InvalidArgument(format!(
                    "bit {max} out of range for {nbits} bits"
                )));
            }
        }
        Ok(BitVector {
            nbits,
            set_bits: set.into_iter().collect(),
        })
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    /// Sorted indices of set bits.
    pub fn set_bits(&self) -> &[usize] {
        &self.set_bits
    }

    pub fn count_ones(&self) -> usize {
        self.set_bits.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.nbits];
        for &b in &self.set_bits {
            dense[b] = 1.0;
        }
        dense
    }
}

fn hash_words(words: &[u32]) -> u32 {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    murmur3::murmur3_32(&mut Cursor::new(bytes), FINGERPRINT_SEED)
        .expect("hashing an in-memory buffer cannot fail")
}

/// Per-round atom identifiers: `rounds[r][atom]` for `r` in `0..=radius`.
pub fn atom_identifiers(graph: &MolGraph, radius: u32) -> Vec<Vec<u32>> {
    let adj = graph.adjacency();
    let mut current: Vec<u32> = graph
        .atoms
        .iter()
        .zip(&adj)
        .map(|(atom, nbrs)| {
            hash_words(&[
                atom.atomic_number as u32,
                nbrs.len() as u32,
                atom.formal_charge as i32 as u32,
                atom.aromatic as u32,
            ])
        })
        .collect();
    let mut rounds = Vec::with_capacity(radius as usize + 1);
    rounds.push(current.clone());
    for round in 1..=radius {
        let next = adj
            .iter()
            .enumerate()
            .map(|(v, nbrs)| {
                let mut pairs: Vec<(u32, u32)> = nbrs
                    .iter()
                    .map(|&(u, order)| (order.code(), current[u]))
                    .collect();
                pairs.sort_unstable();
                let mut words = Vec::with_capacity(2 + 2 * pairs.len());
                words.push(round);
                words.push(current[v]);
                for (code, h) in pairs {
                    words.push(code);
                    words.push(h);
                }
                hash_words(&words)
            })
            .collect();
        current = next;
        rounds.push(current.clone());
    }
    rounds
}

/// Distinct identifiers over all rounds, before folding.
pub fn morgan_features(graph: &MolGraph, radius: u32) -> BTreeSet<u32> {
    atom_identifiers(graph, radius)
        .into_iter()
        .flatten()
        .collect()
}

pub fn morgan_fingerprint(graph: &MolGraph, radius: u32, nbits: usize) -> Result<BitVector> {
    if nbits == 0 {
        return Err(Error::InvalidArgument("nbits must be positive".into()));
    }
    let features = morgan_features(graph, radius);
    BitVector::new(nbits, features.into_iter().map(|h| h as usize % nbits))
}
