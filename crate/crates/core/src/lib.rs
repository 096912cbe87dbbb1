//! Simulation of the additive coalescent through its equivalent
//! constructions, with the statistical machinery to check that they agree.
//!
//! * [`coalescent`]: direct Markov dynamics (pairs merge at rate `x + y`).
//! * [`random_tree`]: opening the edges of a uniform labelled tree.
//! * [`bridge`]: fragmentation of a rotated jump bridge or Brownian excursion.
//! * [`levy`]: spectrally negative Lévy paths, first-passage record sets.
//! * [`smoluchowski`]: eternal solutions of the coagulation equation.
//! * [`sticky`]: one-dimensional ballistic aggregation.
//! * [`verify`]: the cross-construction acceptance checks.

pub mod error;
mod fenwick;
pub mod mass;
pub mod rng;
pub mod stats;

pub mod coalescent;
pub mod random_tree;
pub mod bridge;
pub mod quadrature;
pub mod levy;
pub mod smoluchowski;
pub mod sticky;
pub mod verify;

pub use error::{Error, Result};
pub use mass::{rank, RankedMassVector};
pub use rng::RngStream;
pub use stats::TestReport;
