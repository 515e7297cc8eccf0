//! Time-slotted simulator for wireless multi-hop networks.
//!
//! Implements Ant Backpressure routing (pheromones learned by a count-only
//! shortest-path-biased backpressure run, then probabilistic forwarding into
//! per-neighbor FIFO queues) next to SP-BP and ant colony baselines, with
//! link failures, node mobility and an experiment harness.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataplane;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod policies;
pub mod rng;
pub mod scheduling;
pub mod topology;
pub mod traffic;
pub mod virtualplane;

pub use error::{Error, Result};
