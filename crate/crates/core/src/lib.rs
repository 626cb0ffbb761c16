//! Tactile shape reconstruction: a taxel-level contact simulator over
//! primitive objects, a pluggable shape-completion stage and an
//! information-gain exploration policy.

pub mod completion;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod exploration;
mod files;
pub mod geometry;
pub mod gripper;
pub mod modes;
pub mod primitives;
pub mod seed;

pub use error::{Error, Result};
