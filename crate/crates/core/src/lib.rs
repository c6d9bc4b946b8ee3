//! Approximate tensorization of variance and entropy for spin systems:
//! exact oracles, factorization-constant calculators, separator
//! decompositions, recursive composition and Glauber dynamics.

pub mod error;
pub mod audit;
pub mod bounds;
pub mod cli;
pub mod decomp;
pub mod exact;
pub mod glauber;
pub mod graph;
pub mod par;
pub mod pipeline;
pub mod spin;

pub use error::{Error, Result};
