//! Cucker–Smale flocking simulation with random batch approximations.
//!
//! The crate evolves the full N-particle Cucker–Smale system alongside three
//! cheaper stochastic approximations of it:
//!
//! * RBM-1: each window the particles are partitioned into `N/p` disjoint
//!   batches which evolve independently.
//! * RBM-r: each step one random batch of size `p` is drawn with replacement
//!   across steps; everyone else is frozen.
//! * direct MC: every particle draws its own `p - 1` neighbors, which breaks
//!   momentum conservation.
//!
//! On top of the steppers sit the diagnostics ([`metrics`]), numerical checks
//! of the combinatorial identities used in the error analysis ([`theory`]),
//! and the replication/sweep/benchmark harness behind the `flockrbm` CLI
//! ([`harness`]).

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod methods;
pub mod metrics;
pub mod sampling;
pub mod theory;

pub use dynamics::{Derivative, Ensemble};
pub use error::{Error, Result};
pub use kernel::{Kernel, KernelShape};
pub use methods::{MethodKind, SelectionLedger, Stepper};
pub use sampling::{Batch, Partition, RngStream};
