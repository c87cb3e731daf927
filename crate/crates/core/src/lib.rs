//! Voter-model consensus dynamics on weighted graphs and on their kernel
//! (graphon) limits.
//!
//! * [`kernel`]: kernels on `[0,1]²` with exact piecewise integration.
//! * [`graph`]: weighted graphs, the voter operator, discretisation and sampling.
//! * [`dynamics`]: solvers, closed forms and consensus diagnostics.
//! * [`structure`]: connectivity, component decomposition and twin-sets of step kernels.
//! * [`experiments`]: convergence, proximity and Monte Carlo harnesses.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod kernel;
pub mod structure;

pub use error::{Error, Result};
