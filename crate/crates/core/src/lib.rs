//! Topology learning for power grids whose phase covariance is singular
//! because some buses carry no injection.
//!
//! The pipeline: simulate or load phase samples ([`powerflow`]), estimate
//! their covariance ([`covariance`]), find the zero-injection buses and
//! their neighbors with constrained regressions ([`regression`]), and read
//! the remaining lines off the inverse covariance of the excited buses
//! ([`learner`]). [`harness`] runs Monte-Carlo sweeps over all of it.

pub mod covariance;
pub mod error;
pub mod grid;
pub mod harness;
pub mod laplacian;
pub mod learner;
pub mod linalg;
pub mod powerflow;
pub mod regression;
pub mod topology;

pub use error::{Error, Result};
pub use grid::{Edge, Grid, Line, Node, NodeId};
pub use laplacian::{build_laplacian, kron_reduce, LaplacianMatrix, Weight};
pub use topology::{topology_error, TopologyEstimate};
