//! Observer-based leader-following consensus for positive multi-agent
//! systems with sector-bounded inputs: matrix tests, graph spectra, gain
//! synthesis and simulation.
#![no_std]

extern crate alloc;

pub mod error;
pub mod graph;
pub mod matrix;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result, SynthesisStep};
pub use graph::{DirectedGraph, Network, PinningSet, SpectralData};
pub use matrix::{Matrix, Vector};
pub use sim::{Protocol, Scenario, Trajectory};
pub use synthesis::{GainSet, PlantModel, SynthesisConfig, Variant};
