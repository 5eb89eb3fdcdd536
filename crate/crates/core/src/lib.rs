//! Deterministic microscopic traffic simulation for mixed human/robot
//! traffic, packaged as reinforcement-learning environments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod io;
pub mod metrics;
pub mod network;
pub mod observation;
pub mod reward;
pub mod vehicle;
pub mod world;

pub use error::{Error, Result};
