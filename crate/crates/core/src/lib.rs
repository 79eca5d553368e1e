//! Few-shot prediction of dielectric constant and Young's modulus for
//! acrylate elastomers from SMILES.

pub mod chem;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gin;
pub mod nn;
pub mod tabular;

pub use error::{Error, Result};
