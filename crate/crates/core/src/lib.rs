//! Federated-learning robustness simulator.
//!
//! The crate bundles a small neural-network engine ([`nn`]), dataset
//! ingestion and poisoning ([`data`]), malicious update crafting
//! ([`attacks`]), seven aggregation rules including the softmax-output
//! screening defense XMAM ([`aggregation`]), density clustering and PCA
//! ([`cluster`]), and the round orchestration that ties them together
//! ([`sim`]).

pub mod aggregation;
pub mod attacks;
pub mod cluster;
pub mod config;
pub mod data;
pub mod error;
pub mod nn;
pub mod sim;

pub use error::{Error, Result};
