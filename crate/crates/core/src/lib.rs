//! Lifelong training of a policy that writes symbolic solution-update rules
//! for population-based black-box optimizers.
//!
//! The crate is organized around the optimization loop:
//!
//! - [`expr`] — the symbolic rule DSL (typed binary expression trees).
//! - [`problems`] — shifted/rotated benchmark function categories and task sampling.
//! - [`guide`] — the success-history adaptive DE used as guide and baseline.
//! - [`engine`] — one optimization episode: rule application, state features, reward.
//! - [`policy`] — recurrent actor-critic that emits rule trees token by token.
//! - [`trainer`] — PPO plus the two consolidation losses and Fisher importance.
//! - [`lifelong`] — task schedules and training regimes.
//! - [`harness`] — evaluation protocol, rank tables, forgetting curves, sweeps.

pub mod ad;
pub mod config;
pub mod engine;
pub mod error;
pub mod expr;
pub mod guide;
pub mod harness;
pub mod lifelong;
pub mod policy;
pub mod problems;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
