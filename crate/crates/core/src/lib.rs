//! Non-intrusive reduced-order modeling and surrogate-based optimization of
//! plate thicknesses for a parametrized hull.
//!
//! The pipeline:
//!
//! 1. [`params`] draws a maximin design over the discrete thickness grid.
//! 2. [`synthfom`] solves the (synthetic) full-order model for each sample.
//! 3. [`pod`] compresses each stress component with a truncated SVD.
//! 4. [`rom`] regresses the modal coefficients on the parameters, either with
//!    plain Gaussian processes ([`gp`]) or with the two-fidelity scheme in
//!    [`mfgp`], whose low fidelity is an active-subspace ridge ([`asub`]).
//! 5. [`structeval`] turns predicted stresses into yield/buckling counts and
//!    the penalized mass objective.
//! 6. [`optim`] runs discrete Bayesian optimization on the ROM and enriches
//!    the snapshot database with the best designs.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! stage, and [`pipeline`] for the batch commands behind the `romopt` binary.

pub mod asub;
pub mod config;
pub mod error;
pub mod gp;
pub mod mfgp;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod pod;
pub mod report;
pub mod rng;
pub mod rom;
pub mod store;
pub mod structeval;
pub mod synthfom;

pub use error::{Error, Result};
