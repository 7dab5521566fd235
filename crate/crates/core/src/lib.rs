//! Compact cognitive mapping back-end for 2D pose graphs.
//!
//! Odometry is sparsified with neighborhood fields before it reaches the
//! graph, loop closures are batched into time clusters, each cluster triggers
//! one robust Levenberg-Marquardt solve, and revisited vertices are folded
//! back into the vertices they duplicate. The map grows with the explored
//! area rather than with the length of the trajectory.

pub mod clustering;
pub mod error;
pub mod geometry;
pub mod integration;
pub mod io;
pub mod map;
pub mod optimizer;
pub mod pipeline;
pub mod simulator;
pub mod sparsifier;

pub use error::{Error, Result};
pub use geometry::{wrap_angle, Pose2, RelativeConstraint};
pub use map::{CognitiveMap, Edge, EdgeId, EdgeKind, Vertex, VertexId};
