//! Pathwise simulation of a nonautonomous stochastic p-Laplacian lattice
//! system with multiplicative noise, on a finite window `{-N..=N}`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod lattice;
pub mod liouville;
pub mod noise;
pub mod measures;
pub mod par;
pub mod stats;
pub mod testfn;

pub use dynamics::{Forcing, NuProfile, SystemParams, Trajectory};
pub use error::{Error, Result};
pub use lattice::LatticeVec;
pub use noise::NoisePath;
