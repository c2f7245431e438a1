//! Same-cluster query oracles over overlapping clusterings, with recovery
//! algorithms, query-complexity bounds and an experiment harness.

pub mod bits;
pub mod bounds;
pub mod direct;
pub mod dithered;
pub mod error;
pub mod factorize;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod quantized;
pub mod rng;
pub mod worstcase;

pub use error::{Error, Result};
