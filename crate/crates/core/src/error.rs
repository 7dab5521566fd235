use std::path::PathBuf;

use thiserror::Error;

use crate::map::{EdgeId, VertexId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("vertex id {0} already in use")]
    DuplicateVertex(VertexId),
    #[error("edge id {0} already in use")]
    DuplicateEdge(EdgeId),
    #[error("sequential edge {from} -> {to} already exists")]
    DuplicateSequential { from: VertexId, to: VertexId },
    #[error("self-loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("vertex {0} still has incident edges")]
    VertexNotIsolated(VertexId),
    #[error("map has no anchor vertex")]
    EmptyMap,
    #[error("cannot fold an empty constraint chain")]
    EmptyChain,

    #[error("stamp {got} precedes previous stamp {prev}")]
    NonMonotoneStamp { prev: f64, got: f64 },

    #[error("non-finite cost during optimization")]
    NonFiniteCost,
    #[error("normal equations are singular (is the graph disconnected?)")]
    Singular,

    #[error("route needs at least two distinct waypoints")]
    DegenerateRoute,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: stamp {got} regresses below {prev}")]
    StampRegression { line: usize, prev: f64, got: f64 },
    #[error("line {line}: edge references undefined vertex {vertex}")]
    DanglingReference { line: usize, vertex: VertexId },

    #[error("loop closure targets pose {target}, but only {poses} poses have been seen")]
    LoopTarget { target: usize, poses: usize },

    #[error("metrics alignment failed: {0}")]
    Alignment(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line driver: 2 for data errors,
    /// 3 for numerical failures, 1 for configuration rejected at validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteCost | Error::Singular | Error::NonFinite(_) => 3,
            Error::InvalidConfig(_) => 1,
            _ => 2,
        }
    }
}
