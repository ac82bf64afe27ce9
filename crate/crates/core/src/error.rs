use std::path::PathBuf;

use crate::grid::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid has no reference node")]
    NoReference,
    #[error("grid has more than one reference node ({0} and {1})")]
    MultipleReferences(NodeId, NodeId),
    #[error("reference node {0} cannot be flagged as zero-injection")]
    ReferenceZeroInjection(NodeId),
    #[error("node {0} declared twice")]
    DuplicateNode(NodeId),
    #[error("edge ({0}, {1}) refers to an unknown node")]
    UnknownNode(NodeId, NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge ({i}, {j}) has non-positive susceptance {beta}")]
    NonPositiveSusceptance { i: NodeId, j: NodeId, beta: f64 },
    #[error("edge ({i}, {j}) has negative or non-finite conductance {g}")]
    InvalidConductance { i: NodeId, j: NodeId, g: f64 },
    #[error("grid is disconnected: node {0} cannot reach the reference")]
    Disconnected(NodeId),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error(
        "covariance is rank-deficient or ill-conditioned (condition number {condition:e}); \
         this is expected for the full phase covariance of an under-excited grid, \
         restrict it to the excited nodes first"
    )]
    IllConditioned { condition: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("node {0} is not part of the covariance labels")]
    UnknownLabel(NodeId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("Newton power flow did not converge in {iterations} iterations (mismatch {mismatch:e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid experiment spec: {0}")]
    Spec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
