//! Online learning-to-rank under fake users.
//!
//! The crate simulates a cascade click model in which an adversary controls a
//! bounded number of rounds, and measures how ranking learners cope:
//!
//! - [`model`]: the ground-truth cascade model (click and exit probabilities).
//! - [`order_graph`]: the product-dominance graph and graph-driven ranking selection.
//! - [`far`]: fake-aware ranking, which knows the fakeness budget.
//! - [`forc`]: fake-oblivious ranking with multi-level cross-learning.
//! - [`ucb`]: the cascade UCB baseline.
//! - [`adversary`]: scripted fake-user policies behind a budget.
//! - [`harness`]: the round loop, regret accounting and replications.
//! - [`event_log`]: per-round recording and replay oracles.
//! - [`config`]: experiment configuration and built-in scenarios.
//! - [`report`]: CSV output and summaries.
//!
//! Products and positions are 0-based everywhere in the API. FORC levels are
//! 1-based because the level index appears in the sampling weights.

pub mod adversary;
pub mod config;
pub mod error;
pub mod event_log;
pub mod far;
pub mod feedback;
pub mod forc;
pub mod harness;
pub mod model;
pub mod order_graph;
pub mod report;
pub mod ucb;

pub use error::{Error, Result};
pub use model::{Instance, Observation, Ranking};
pub use order_graph::OrderGraph;
