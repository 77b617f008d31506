//! Coarse-grained pilot-wave dynamics on discrete, time-indexed configuration
//! spaces.
//!
//! A wave function evolves stage by stage under step operators; a particle
//! occupies one configuration label per stage and jumps according to a
//! stochastic transfer matrix that carries the Born distribution forward.
//! On top of that sit exact and sampled ensembles with postselection, an
//! auditor for the principles such models are expected to satisfy, a
//! two-state-vector engine, and a small text format for experiments.

pub mod audit;
pub mod dsl;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod guidance;
pub mod state;
pub mod twostate;

pub use error::{Error, Result};
