//! Simulation and numerical tools for many-server FCFS queues in the
//! Halfin-Whitt regime: renewal streams, a multi-server event engine, the
//! random-walk upper bound and Poisson lower bound on the steady-state queue,
//! and the Gaussian limit of the bound process.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dist;
pub mod error;
pub mod gauss;
pub mod numeric;
pub mod par;
pub mod qsim;
pub mod renewal;
pub mod rng;
pub mod stats;

pub use dist::{DistSpec, Family, HWScaling};
pub use error::{Error, Result};
