//! Simulation laboratory for bandit linear optimization: decision domains,
//! lower-bound loss constructions, players, a seeded Monte Carlo harness and
//! scaling-law analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod player;
pub mod selftest;

pub use error::{Error, Result};
