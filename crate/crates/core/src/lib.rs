//! Simulator and gradient-based trainer for quantum photonic neural networks
//! operating on multimode multi-photon Fock states.
//!
//! The crate covers the full pipeline: Fock-basis machinery, programmable
//! interferometer meshes with Clements decomposition, photon-number-selective
//! nonlinear phase gates, network assembly and training, benchmark tasks on
//! bosonic codes, and a continuous-mode scattering solver for the nonlinear
//! gate itself.

pub mod error;
pub mod fock;
pub mod interferometer;
pub mod lift;
pub mod network;
pub mod nonlinear;
pub mod optim;
pub mod scattering;
pub mod tasks;

pub use error::{Error, Result};
