//! Hierarchical federated learning over a LEO constellation.
//!
//! Satellites on circular tracks train a shared semantic-communication
//! autoencoder on local data. Ground gateways collect and merge their models
//! during coverage windows, and a cloud server merges the gateway models
//! into the global one.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod association;
pub mod learner;
pub mod link;
pub mod orbital;
pub mod resource;
pub mod harness;
