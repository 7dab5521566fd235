//! End-to-end driver: events in, map and growth metrics out.
//!
//! Odometry goes through the neighborhood gate; a loop event pins a vertex at
//! the current pose and links it to the vertex stored for the matched pose.
//! Loop edges are grouped into clusters and each closed cluster triggers one
//! optimization followed, in the compact modes, by scene integration.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    on_cluster_closed, Assignment, ClusterConfig, ClusterManager, LoopCluster,
};
use crate::error::{Error, Result};
use crate::geometry::{Pose2, RelativeConstraint};
use crate::integration::{IntegrationConfig, IntegrationReport, SceneIntegrator};
use crate::io::{self, MetricsRecord};
use crate::map::{CognitiveMap, EdgeKind, VertexId};
use crate::optimizer::SolverConfig;
use crate::simulator::{self, Payload, SimConfig, SimEvent};
use crate::sparsifier::{
    flush_pending, ingest_odometry, Ingest, NeighborhoodAccumulator, NeighborhoodConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Every pose is a vertex; nothing is ever removed.
    Standard,
    /// Every pose is a vertex; revisits are integrated.
    IntegrationOnly,
    /// Gated vertices and integration.
    #[default]
    CompactFull,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Standard, Mode::IntegrationOnly, Mode::CompactFull];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::IntegrationOnly => "compact-integration-only",
            Mode::CompactFull => "compact-full",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Gate used in compact-full; the other modes keep every pose.
    pub neighborhood: NeighborhoodConfig,
    pub clustering: ClusterConfig,
    pub integration: IntegrationConfig,
    pub solver: SolverConfig,
}

impl PipelineConfig {
    pub fn for_mode(mode: Mode) -> Self {
        PipelineConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn effective_neighborhood(&self) -> NeighborhoodConfig {
        match self.mode {
            Mode::CompactFull => self.neighborhood,
            Mode::Standard | Mode::IntegrationOnly => NeighborhoodConfig::keep_all(),
        }
    }

    pub fn integrates(&self) -> bool {
        self.mode != Mode::Standard
    }

    pub fn validate(&self) -> Result<()> {
        self.neighborhood.validate()?;
        self.clustering.validate()?;
        self.integration.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub events: usize,
    pub odometry: usize,
    pub loops_added: usize,
    /// Loop events whose matched pose was never kept as a vertex, or that
    /// matched the vertex the robot already sits on.
    pub loops_dropped: usize,
    pub clusters: usize,
    pub optimize_calls: usize,
    pub removed_vertices: usize,
    pub removed_edges: usize,
    pub vertices: usize,
    pub edges: usize,
}

/// Streaming pipeline state.
pub struct Pipeline {
    cfg: PipelineConfig,
    gate: NeighborhoodConfig,
    map: CognitiveMap,
    acc: NeighborhoodAccumulator,
    clusters: ClusterManager,
    integrator: SceneIntegrator,
    /// Vertex created at each pose index, if any.
    pose_vertex: Vec<Option<VertexId>>,
    /// Removed vertex -> (survivor, survivor seen from the removed vertex).
    redirects: HashMap<VertexId, (VertexId, RelativeConstraint)>,
    metrics: Vec<MetricsRecord>,
    totals: Totals,
    last_cost: f64,
    last_stamp: f64,
}

impl Pipeline {
    /// A map holding the origin vertex, stamped `t0`.
    pub fn new(cfg: PipelineConfig, t0: f64) -> Result<Self> {
        cfg.validate()?;
        if !t0.is_finite() {
            return Err(Error::NonFinite("start stamp"));
        }
        let map = CognitiveMap::with_origin(Pose2::ORIGIN, t0);
        let acc = NeighborhoodAccumulator::for_map(&map)?;
        Ok(Pipeline {
            gate: cfg.effective_neighborhood(),
            clusters: ClusterManager::new(cfg.clustering),
            integrator: SceneIntegrator::new(cfg.integration),
            cfg,
            map,
            acc,
            pose_vertex: vec![Some(VertexId(0))],
            redirects: HashMap::new(),
            metrics: Vec::new(),
            totals: Totals::default(),
            last_cost: 0.0,
            last_stamp: t0,
        })
    }

    pub fn map(&self) -> &CognitiveMap {
        &self.map
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    pub fn totals(&self) -> Totals {
        Totals {
            vertices: self.map.vertex_count(),
            edges: self.map.edge_count(),
            ..self.totals
        }
    }

    /// The vertex the robot's pending motion is measured from.
    pub fn anchor(&self) -> VertexId {
        self.acc.anchor_vertex
    }

    pub fn ingest(&mut self, event: &SimEvent) -> Result<()> {
        let stamp = event.stamp;
        if !stamp.is_finite() {
            return Err(Error::NonFinite("event stamp"));
        }
        if stamp < self.last_stamp {
            return Err(Error::NonMonotoneStamp {
                prev: self.last_stamp,
                got: stamp,
            });
        }
        self.last_stamp = stamp;
        self.totals.events += 1;
        self.close_stale_cluster(stamp)?;
        match event.payload {
            Payload::Odom(step) => self.odometry(&step, stamp)?,
            Payload::Loop(target, c) => self.loop_closure(target, &c, stamp)?,
        }
        self.record(stamp);
        Ok(())
    }

    /// Closes the last cluster, pins the final pose and removes short edges.
    /// Adds one metrics row stamped like the last event.
    pub fn finish(&mut self) -> Result<()> {
        if let Some(c) = self.clusters.flush() {
            self.process(c)?;
        }
        let here = flush_pending(&mut self.map, &mut self.acc, self.last_stamp)?;
        self.note_pose_vertex(here);
        self.compact_short_edges()?;
        if self.totals.events > 0 {
            self.record(self.last_stamp);
        }
        Ok(())
    }

    fn odometry(&mut self, step: &RelativeConstraint, stamp: f64) -> Result<()> {
        self.totals.odometry += 1;
        let kept = ingest_odometry(&mut self.map, &mut self.acc, step, stamp, &self.gate)?;
        self.pose_vertex.push(match kept {
            Ingest::Kept(v) => Some(v),
            Ingest::Skipped => None,
        });
        Ok(())
    }

    fn loop_closure(&mut self, target: usize, c: &RelativeConstraint, stamp: f64) -> Result<()> {
        let here_index = self.pose_vertex.len() - 1;
        let Some(&slot) = self.pose_vertex.get(target) else {
            return Err(Error::LoopTarget {
                target,
                poses: self.pose_vertex.len(),
            });
        };
        let Some(stored) = slot.filter(|_| target < here_index) else {
            self.totals.loops_dropped += 1;
            return Ok(());
        };
        let (old, to_old) = self.resolve(stored);

        // close the running cluster first if this edge cannot join it
        if let Some(open) = self.clusters.open_cluster() {
            if !self
                .clusters
                .config()
                .admits(open.t_start, open.t_last, stamp)
            {
                let closed = self.clusters.flush().expect("open");
                self.process(closed)?;
            }
        }
        let (old, to_old) = {
            let (o, t) = self.resolve(old);
            (o, to_old.compose(&t))
        };
        let here = flush_pending(&mut self.map, &mut self.acc, stamp)?;
        self.note_pose_vertex(here);
        if here == old {
            self.totals.loops_dropped += 1;
            return Ok(());
        }
        let edge =
            self.map
                .add_edge(here, old, c.compose(&to_old), EdgeKind::LoopClosure, stamp)?;
        self.totals.loops_added += 1;
        if let Assignment::NewCluster(closed) = self.clusters.assign(edge, stamp)? {
            self.process(closed)?;
        }
        Ok(())
    }

    fn note_pose_vertex(&mut self, v: VertexId) {
        if let Some(last) = self.pose_vertex.last_mut() {
            last.get_or_insert(v);
        }
    }

    /// Follows redirects to a live vertex; returns it with its pose seen
    /// from `v`.
    fn resolve(&self, mut v: VertexId) -> (VertexId, RelativeConstraint) {
        let mut c = RelativeConstraint::IDENTITY;
        while let Some((next, step)) = self.redirects.get(&v) {
            c = c.compose(step);
            v = *next;
        }
        (v, c)
    }

    fn close_stale_cluster(&mut self, stamp: f64) -> Result<()> {
        let stale = self
            .clusters
            .open_cluster()
            .is_some_and(|c| stamp - c.t_last > self.clusters.config().t_interval);
        if stale {
            let closed = self.clusters.flush().expect("open");
            self.process(closed)?;
        }
        Ok(())
    }

    fn process(&mut self, mut cluster: LoopCluster) -> Result<()> {
        self.totals.clusters += 1;
        let live: Vec<bool> = cluster
            .edges
            .iter()
            .map(|e| self.map.edge(*e).is_some())
            .collect();
        let mut keep = live.iter();
        cluster
            .stamps
            .retain(|_| *keep.next().expect("same length"));
        cluster.edges.retain(|e| self.map.edge(*e).is_some());
        if cluster.edges.is_empty() {
            return Ok(());
        }
        let report = on_cluster_closed(&mut self.map, &cluster, &self.cfg.solver)?;
        self.totals.optimize_calls += 1;
        self.last_cost = report.final_cost;
        if self.cfg.integrates() {
            let r = self.integrator.integrate_cluster(&mut self.map, &cluster)?;
            self.apply(r);
            self.compact_short_edges()?;
        }
        Ok(())
    }

    fn compact_short_edges(&mut self) -> Result<()> {
        if self.cfg.integrates() {
            let r = self
                .integrator
                .remove_short_edges(&mut self.map, Some(self.acc.anchor_vertex))?;
            self.apply(r);
        }
        Ok(())
    }

    fn apply(&mut self, r: IntegrationReport) {
        self.totals.removed_vertices += r.removed_vertices.len();
        self.totals.removed_edges += r.removed_edges.len();
        for d in r.redirects {
            self.redirects
                .insert(d.removed, (d.survivor, d.removed_to_survivor));
            if self.acc.anchor_vertex == d.removed {
                self.acc.rebase(d.survivor, &d.removed_to_survivor);
            }
        }
    }

    fn record(&mut self, stamp: f64) {
        self.metrics.push(MetricsRecord {
            stamp,
            vertex_count: self.map.vertex_count(),
            edge_count: self.map.edge_count(),
            optimize_calls: self.totals.optimize_calls,
            final_cost: self.last_cost,
        });
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub map: CognitiveMap,
    pub metrics: Vec<MetricsRecord>,
    pub totals: Totals,
}

/// Runs a whole event stream in memory.
pub fn run_events(cfg: &PipelineConfig, events: &[SimEvent]) -> Result<RunOutput> {
    let t0 = events.first().map_or(0.0, |e| e.stamp.min(0.0));
    let mut p = Pipeline::new(cfg.clone(), t0)?;
    for e in events {
        p.ingest(e)?;
    }
    p.finish()?;
    Ok(RunOutput {
        totals: p.totals(),
        metrics: p.metrics,
        map: p.map,
    })
}

#[derive(Debug, Clone)]
pub enum Source {
    Events(PathBuf),
    Simulated(SimConfig),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub source: Source,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub map_path: PathBuf,
    pub metrics_path: PathBuf,
    /// Written when the events were simulated.
    pub events_path: Option<PathBuf>,
    pub totals: Totals,
}

/// Runs the pipeline and writes `map.graph` and `metrics.csv` (plus
/// `events.txt` for simulated input) into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let (events, events_path) = match &cfg.source {
        Source::Events(path) => (io::parse_events(path)?, None),
        Source::Simulated(sim) => (
            simulator::generate(sim)?.events,
            Some(cfg.out_dir.join("events.txt")),
        ),
    };
    let out = run_events(&cfg.pipeline, &events)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    if let Some(p) = &events_path {
        io::write_events(&events, p)?;
    }
    let map_path = cfg.out_dir.join("map.graph");
    let metrics_path = cfg.out_dir.join("metrics.csv");
    io::write_graph(&out.map, &map_path)?;
    io::write_metrics(&out.metrics, &metrics_path)?;
    Ok(RunReport {
        map_path,
        metrics_path,
        events_path,
        totals: out.totals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub stamp: f64,
    pub vertices_a: usize,
    pub vertices_b: usize,
    pub edges_a: usize,
    pub edges_b: usize,
    pub vertex_ratio: f64,
    pub edge_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<RatioRow>,
    pub final_vertex_delta: i64,
    pub final_edge_delta: i64,
}

impl Comparison {
    pub fn last(&self) -> &RatioRow {
        self.rows.last().expect("alignment is never empty")
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        a as f64 / b as f64
    }
}

/// Aligns two metrics series on their common stamps (last row per stamp)
/// and tabulates `a / b` count ratios.
pub fn compare(a: &[MetricsRecord], b: &[MetricsRecord]) -> Result<Comparison> {
    let last_per_stamp = |rs: &[MetricsRecord]| {
        let mut out: Vec<MetricsRecord> = Vec::with_capacity(rs.len());
        for r in rs {
            match out.last_mut() {
                Some(prev) if prev.stamp == r.stamp => *prev = *r,
                _ => out.push(*r),
            }
        }
        out
    };
    let (a, b) = (last_per_stamp(a), last_per_stamp(b));
    let mut rows = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].stamp.total_cmp(&b[j].stamp) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let (x, y) = (a[i], b[j]);
                rows.push(RatioRow {
                    stamp: x.stamp,
                    vertices_a: x.vertex_count,
                    vertices_b: y.vertex_count,
                    edges_a: x.edge_count,
                    edges_b: y.edge_count,
                    vertex_ratio: ratio(x.vertex_count, y.vertex_count),
                    edge_ratio: ratio(x.edge_count, y.edge_count),
                });
                i += 1;
                j += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Alignment(format!(
            "no common stamps between runs of {} and {} rows",
            a.len(),
            b.len()
        )));
    }
    let (fa, fb) = (a.last().expect("non-empty"), b.last().expect("non-empty"));
    Ok(Comparison {
        rows,
        final_vertex_delta: fa.vertex_count as i64 - fb.vertex_count as i64,
        final_edge_delta: fa.edge_count as i64 - fb.edge_count as i64,
    })
}

pub fn compare_files(a: impl AsRef<Path>, b: impl AsRef<Path>) -> Result<Comparison> {
    compare(&io::read_metrics(a)?, &io::read_metrics(b)?)
}
