//! Exact lumped Markov chains, spectral and conductance analysis, and Monte
//! Carlo simulation for tempering-type samplers on mean-field Potts/Ising
//! models and a toy exponential family.

pub mod analysis;
pub mod error;
pub mod lumped;
pub mod mc;
pub mod models;
pub mod numeric;

pub use error::{Error, Result};
