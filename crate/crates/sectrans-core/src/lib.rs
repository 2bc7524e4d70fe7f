//! Schedulability analysis and parameter synthesis for control transactions
//! with intermittent message authentication.
//!
//! Everything here is pure computation over in-memory data and builds without
//! the standard library.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod demand;
pub mod edf_sim;
pub mod milp;
pub mod model;
pub mod opportunistic;
pub mod qoc_sim;
pub mod time;
pub mod workload_gen;
