//! Finite-state Markov kinetics on energy landscapes.
//!
//! Builds Arrhenius transition intensities from a [`Landscape`], evolves
//! probability densities under the Kolmogorov equation with two independent
//! engines, and audits the resulting trajectories thermodynamically: Gibbs
//! stationarity, detailed balance, free-energy descent and relaxation.
//! Deterministic self-maps and their transfer operators live in [`transfer`];
//! exact jump sampling in [`sampler`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fixtures;
pub mod kinetics;
pub mod numerics;
pub mod sampler;
pub mod semigroup;
pub mod statespace;
pub mod thermo;
pub mod transfer;

/// Carried by every JSON document this crate emits.
pub const SCHEMA_VERSION: u32 = 1;

pub use error::{Error, Result};
pub use kinetics::{arrhenius_rates, RateSystem};
pub use sampler::Path;
pub use semigroup::{Engine, Kernel, StabilityCertificate, Trajectory};
pub use statespace::{load_landscape, Density, Landscape};
pub use thermo::{BalanceRow, GibbsReport, ThermoParams};
pub use transfer::FiniteMap;
