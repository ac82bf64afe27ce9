//! Estimated topologies and the relative edge error.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::grid::{Edge, Grid, NodeId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TopologyEstimate {
    pub edges: BTreeSet<Edge>,
    pub zero_injection_nodes: BTreeSet<NodeId>,
}

/// `(false edges + missed edges) / true edges`.
pub fn edge_set_error(truth: &BTreeSet<Edge>, estimate: &BTreeSet<Edge>) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("true edge set is empty".into()));
    }
    let false_edges = estimate.difference(truth).count();
    let missed = truth.difference(estimate).count();
    Ok((false_edges + missed) as f64 / truth.len() as f64)
}

/// Relative error against the lines a learner can see: lines touching the
/// reference are excluded, since its phase is the zero of every sample.
pub fn topology_error(truth: &Grid, estimate: &TopologyEstimate) -> Result<f64> {
    edge_set_error(&truth.observable_edges(), &estimate.edges)
}
