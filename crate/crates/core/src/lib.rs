//! Zeroth-order Nash equilibrium seeking in N-cluster games.
//!
//! Agents inside a cluster cooperate to minimise the cluster's average cost
//! while clusters compete with each other. Each agent only sees its own cost
//! values, estimates gradients with a two-point random oracle and exchanges
//! estimates and gradient trackers with in-cluster neighbours.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod analysis;
pub mod experiments;
pub mod game;
pub mod network;
pub mod oracle;

pub use algorithm::{NashSeeker, StepSizes};
pub use game::{build_connectivity_game, ClusterLayout, Game, QuadraticGame};
pub use network::CommGraph;
