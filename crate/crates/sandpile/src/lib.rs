//! Abelian sandpile model on finite volumes of regular trees and grids.
//!
//! The crate is organized around the life cycle of an experiment:
//!
//! - [`topology`]: volumes (tree balls, grid boxes), toppling matrices,
//!   site enumerations and nested volume schedules;
//! - [`engine`]: height configurations, the toppling rule, stabilization,
//!   addition operators and the finite-volume Markov dynamics;
//! - [`recurrence`]: the burning algorithm, exact recurrent counting via
//!   integer determinants, and the group structure of addition operators;
//! - [`measure`]: the uniform measure on recurrent configurations, exact
//!   and Monte Carlo expectations, convergence diagnostics;
//! - [`observables`]: avalanche clusters, tail fits, Green's functions,
//!   correlations and the transfer-matrix bound;
//! - [`dynamics`]: addition-rate functions, the summability condition,
//!   and coupled truncated Poisson runs approximating the infinite-volume
//!   process.

pub mod dynamics;
pub mod engine;
pub mod error;
pub mod measure;
pub mod observables;
pub mod recurrence;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
