//! Simulation and analysis of coupled-ring photon-pair sources.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analysis;
pub mod cli;
pub mod config;
pub mod coupler;
pub mod error;
pub mod io;
pub mod molecule;
pub mod optimizer;
pub mod sfwm;
pub mod sim;
pub mod spectral;
pub use error::{Error, Result};
