//! Simulation, bifurcation analysis, and data-driven detection of critical
//! transitions in coupled-oscillator and attraction-repulsion networks.

pub mod error;
pub mod graph;
pub mod models;
pub mod bifurcation;
pub mod simulation;
pub mod detection;
pub mod cli_io;

pub use error::{Error, ErrorClass, Result};
