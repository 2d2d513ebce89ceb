//! Monte Carlo toolkit for random walks in i.i.d. random environments on
//! `Z^d` whose site laws may forbid some directions.
//!
//! Everything is deterministic given the seeds: the environment at a site is
//! a hash of the environment seed and the coordinates, and each walk draws
//! its steps from its own ChaCha8 stream.

pub mod env;
pub mod error;
pub mod ballistic;
pub mod cluster;
pub mod lattice;
pub mod otsp;
pub mod regen;
pub mod saw;
pub mod seed;
pub mod stats;
pub mod walk;

pub use env::{EnvironmentHandle, EnvironmentLaw, Preset, SiteLaw};
pub use error::{Error, Result};
pub use lattice::{Direction, Site};
pub use walk::{run_walk, Trajectory};
