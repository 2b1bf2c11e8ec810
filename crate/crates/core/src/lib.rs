//! Weak solutions of Camassa-Holm type equations, their characteristics and
//! the transfer of slope energy between the positive and negative parts of
//! `u_x`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod cli;
pub mod config;
pub mod error;
pub mod exact;
pub mod kernel;
pub mod measures;
pub mod mesh;
pub mod ode;
pub mod output;
pub mod peakons;
pub mod profile;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{KernelId, KernelSpec};
pub use mesh::MeshSpec;
pub use peakons::PeakonSum;
pub use profile::{EnergySplit, Pressure, WaveProfile};
