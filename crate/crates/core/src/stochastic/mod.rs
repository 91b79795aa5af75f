//! Stochastic Chain Ladder benchmarks.

pub mod mack;
pub mod odp;

pub use mack::{fit_mack, mack_bootstrap, mack_bootstrap_with, MackBootstrapOptions, MackFit};
pub use odp::{fit_odp, odp_bootstrap, odp_bootstrap_with, OdpBootstrapOptions, OdpFit};
