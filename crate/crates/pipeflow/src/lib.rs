//! Three interchangeable realizations of an ergodic map and the statistics
//! that connect them.
//!
//! The crate starts from a deterministic map sampled along an orbit
//! ([`dynamics`]), coarse-grains it into a box partition with cell-to-cell
//! transition frequencies ([`partition`]), samples the resulting step-skew
//! Markov product ([`stepskew`]), and realizes the same transition structure
//! as a continuous-time flow through a network of junctions and pipes
//! ([`network`]) whose switches are actuated by a deterministic mixing
//! suspension flow ([`driver`]). The [`paths`] module compares the path laws
//! of the discrete and continuous realizations through symbol cylinders.

pub mod config;
pub mod driver;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod network;
pub mod partition;
pub mod paths;
pub mod rng;
pub mod stats;
pub mod stepskew;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
