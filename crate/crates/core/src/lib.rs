//! Variational implicit processes.
//!
//! Function priors that can only be sampled (Bayesian MLPs, neural samplers)
//! are approximated by the Gaussian process matching their first two
//! moments. Training maximizes an α-energy of the resulting Bayesian linear
//! regression over `S` sampled functions; prediction uses either the dense GP
//! equations or the equivalent rank-`S` feature form.

pub mod autodiff;
pub mod baseline_gp;
pub mod bench;
pub mod error;
pub mod inference;
pub mod numkit;
pub mod predict;
pub mod priors;

pub use error::{Result, VipError};
pub use numkit::{Matrix, Rng};
