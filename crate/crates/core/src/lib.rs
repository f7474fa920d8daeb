//! Fair early-exit offloading for edge inference.
//!
//! A device runs a multi-exit classifier over a stream of events. Each event either exits early
//! as normal, exits early as critical (and is offloaded to an edge node), or runs to the last
//! layer. This crate picks the exit thresholds, the edge node, and the link and compute
//! resources for every device so that the weighted sum of log detection rates is maximised.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exitpolicy;
pub mod fairopt;
pub mod link;
pub mod oracle;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
