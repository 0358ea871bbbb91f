//! Object-goal navigation in procedurally generated rooms.
//!
//! The agent observes a per-object context matrix built from a ground-truth
//! detector, embeds a knowledge graph of object relations with a three-layer
//! contextualized graph network, and is trained with asynchronous
//! advantage actor-critic under a parent/target shaped reward.

pub mod catalog;
pub mod cgn;
pub mod config;
pub mod context;
pub mod error;
pub mod dump;
pub mod eval;
pub mod gradcheck;
pub mod knowledge;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod task;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
