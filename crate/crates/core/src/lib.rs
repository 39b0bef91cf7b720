//! Finite truncations of spectral triples on crossed products by
//! equicontinuous group actions.

pub mod algebra;
pub mod cli;
pub mod crossed;
pub mod dynamics;
pub mod error;
pub mod groupgeo;
pub mod lp;
pub mod matops;
pub mod qmetric;
pub mod random;
pub mod triple;

pub use error::{Error, Result};
