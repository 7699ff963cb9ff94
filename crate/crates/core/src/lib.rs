//! Finite-recall repeated games, q-replicator learning dynamics and
//! equilibrium certification.

pub mod error;
pub mod behavioural;
pub mod cli;
pub mod dynamics;
pub mod equilibrium;
pub mod estimator;
pub mod folk;
pub mod game;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod scenario;
pub mod strategy;
pub mod valuation;

pub use error::{Error, Result};
