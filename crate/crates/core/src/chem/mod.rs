//! Molecular graphs: SMILES parsing and circular fingerprints.

mod fingerprint;
mod graph;
mod smiles;

pub use fingerprint::{
    atom_identifiers, morgan_features, morgan_fingerprint, BitVector, DEFAULT_NBITS,
    DEFAULT_RADIUS, FINGERPRINT_SEED,
};
pub use graph::{
    element_symbol, invert_permutation, Atom, Bond, BondOrder, MolGraph, MAX_ATOMIC_NUMBER,
};
pub use smiles::{
    parse_smiles, parse_smiles_with_warnings, ParsedSmiles, SmilesError, SmilesErrorKind,
};
