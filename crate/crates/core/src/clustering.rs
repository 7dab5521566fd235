//! Time-based clustering of loop-closure edges.
//!
//! A loop edge joins the open cluster when it arrives within `t_interval` of
//! the previous loop edge and within `t_total` of the cluster's first edge.
//! Otherwise the open cluster is closed and handed to the optimizer as one
//! batch, and the edge starts a new cluster.

use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{CognitiveMap, EdgeId};
use crate::optimizer::{optimize, OptimizeReport, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Largest admitted gap between consecutive loop edges, seconds.
    pub t_interval: f64,
    /// Largest admitted span of one cluster, seconds.
    pub t_total: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            t_interval: 2.0,
            t_total: 100.0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_interval > 0.0 && self.t_total >= self.t_interval && self.t_total.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "cluster thresholds need 0 < t_interval <= t_total, got {self:?}"
            )))
        }
    }

    /// Whether an edge at `stamp` may join a cluster that started at
    /// `t_start` and last grew at `t_last`.
    pub fn admits(&self, t_start: f64, t_last: f64, stamp: f64) -> bool {
        stamp - t_last <= self.t_interval && stamp - t_start <= self.t_total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopCluster {
    pub id: usize,
    /// Loop edges in stamp order.
    pub edges: Vec<EdgeId>,
    pub stamps: Vec<f64>,
    pub t_start: f64,
    pub t_last: f64,
    pub state: ClusterState,
}

impl LoopCluster {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assignment {
    /// No cluster was open; this edge opened one.
    Opened(usize),
    Continued,
    /// The edge split off a new cluster; the previous one is now closed.
    NewCluster(LoopCluster),
}

#[derive(Debug, Clone, Default)]
pub struct ClusterManager {
    cfg: ClusterConfig,
    open: Option<LoopCluster>,
    next_id: usize,
    last_stamp: Option<f64>,
    closed: usize,
}

impl ClusterManager {
    pub fn new(cfg: ClusterConfig) -> Self {
        ClusterManager {
            cfg,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn open_cluster(&self) -> Option<&LoopCluster> {
        self.open.as_ref()
    }

    /// Clusters closed so far, including flushed ones.
    pub fn closed_count(&self) -> usize {
        self.closed
    }

    pub fn assign(&mut self, edge: EdgeId, stamp: f64) -> Result<Assignment> {
        if let Some(prev) = self.last_stamp {
            if stamp < prev || !stamp.is_finite() {
                return Err(Error::NonMonotoneStamp { prev, got: stamp });
            }
        }
        self.last_stamp = Some(stamp);

        let Some(open) = self.open.as_mut() else {
            let id = self.start(edge, stamp);
            return Ok(Assignment::Opened(id));
        };
        if self.cfg.admits(open.t_start, open.t_last, stamp) {
            open.edges.push(edge);
            open.stamps.push(stamp);
            open.t_last = stamp;
            return Ok(Assignment::Continued);
        }
        let closed = self.close().expect("cluster is open");
        self.start(edge, stamp);
        Ok(Assignment::NewCluster(closed))
    }

    /// Closes and returns the open cluster, if any.
    pub fn flush(&mut self) -> Option<LoopCluster> {
        self.close()
    }

    fn start(&mut self, edge: EdgeId, stamp: f64) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.open = Some(LoopCluster {
            id,
            edges: vec![edge],
            stamps: vec![stamp],
            t_start: stamp,
            t_last: stamp,
            state: ClusterState::Open,
        });
        id
    }

    fn close(&mut self) -> Option<LoopCluster> {
        let mut c = self.open.take()?;
        c.state = ClusterState::Closed;
        self.closed += 1;
        Some(c)
    }
}

fn check_closed(map: &CognitiveMap, cluster: &LoopCluster) -> Result<()> {
    if cluster.state != ClusterState::Closed {
        return Err(Error::InvalidConfig(format!(
            "cluster {} is still open",
            cluster.id
        )));
    }
    match cluster.edges.iter().find(|e| map.edge(**e).is_none()) {
        Some(&missing) => Err(Error::UnknownEdge(missing)),
        None => Ok(()),
    }
}

/// One batch optimization over the whole map for a closed cluster.
pub fn on_cluster_closed(
    map: &mut CognitiveMap,
    cluster: &LoopCluster,
    solver: &SolverConfig,
) -> Result<OptimizeReport> {
    check_closed(map, cluster)?;
    optimize(map, solver)
}

/// Cluster optimization running on a worker thread.
///
/// The job owns the map until [`OptimizationJob::join`] hands it back, so
/// ingestion cannot touch the map while the solve is in flight.
pub struct OptimizationJob {
    handle: JoinHandle<(CognitiveMap, Result<OptimizeReport>)>,
}

impl OptimizationJob {
    pub fn spawn(mut map: CognitiveMap, cluster: LoopCluster, solver: SolverConfig) -> Self {
        let handle = std::thread::spawn(move || {
            let report = on_cluster_closed(&mut map, &cluster, &solver);
            (map, report)
        });
        OptimizationJob { handle }
    }

    pub fn is_finished(&self) -> bool {
        self.handle.is_finished()
    }

    /// Blocks until the solve finishes and returns the map.
    pub fn join(self) -> (CognitiveMap, Result<OptimizeReport>) {
        match self.handle.join() {
            Ok(out) => out,
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }
}
