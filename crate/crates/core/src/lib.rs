//! Simulation of three two-level emitters in front of a waveguide mirror: collective
//! couplings, open-system dynamics, decoherence-free gates, shaped photon emission,
//! scattering CZ gates and sequential photonic graph-state protocols.

pub mod config;
pub mod dynamics;
pub mod emission;
pub mod error;
pub mod gates;
pub mod geometry;
pub mod harness;
pub mod hilbert;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod protocol;
pub mod rng;
pub mod robustness;
pub mod scattering;
pub mod special;
pub mod sweep;
pub mod wavepacket;

pub use error::{Error, Result};
