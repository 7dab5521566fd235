//! Robust nonlinear least squares over all vertex poses.
//!
//! Minimizes `½ Σ ρ(w_e ‖r_e‖²)` with a damped Gauss-Newton
//! (Levenberg-Marquardt) iteration. The normal equations are assembled
//! block-sparsely from the edge list and factored with [`sparse`]. One vertex
//! is held fixed to remove the rigid-motion gauge freedom.

mod residual;
pub mod sparse;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use residual::{huber_rho, huber_weight, residual, residual_jacobians, Loss};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::map::{CognitiveMap, Edge, EdgeId, VertexId};
use sparse::{BlockMatrix, Factor, Symbolic};

/// Damping beyond which a failed step is treated as "no further progress".
const MAX_DAMPING: f64 = 1e16;

fn unit_weight(_: &Edge) -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub loss: Loss,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_cost_tolerance: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Vertex held fixed; `None` picks the lowest id.
    pub anchor: Option<VertexId>,
    /// Evaluate edge terms on the rayon pool (ignored without the
    /// `parallel` feature).
    pub parallel: bool,
    /// Scalar weight per edge. Unit by default.
    pub edge_weight: fn(&Edge) -> f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            loss: Loss::default(),
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            relative_cost_tolerance: 1e-8,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 10.0,
            anchor: None,
            parallel: true,
            edge_weight: unit_weight,
        }
    }
}

impl SolverConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if let Loss::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return bad("huber delta must be positive");
            }
        }
        if !(self.gradient_tolerance > 0.0 && self.relative_cost_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.initial_damping > 0.0 && self.damping_up > 1.0 && self.damping_down > 1.0) {
            return bad("damping must be positive with factors above 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    /// Accepted steps.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

/// Linearization of one edge at the current poses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub edge: EdgeId,
    pub residual: Vector3<f64>,
    pub jacobian_from: Matrix3<f64>,
    pub jacobian_to: Matrix3<f64>,
    /// `ρ'(s) · w_e`, the factor applied to this block's normal-equation terms.
    pub robust_weight: f64,
    /// `ρ(s)` with `s = w_e ‖r‖²`.
    pub rho: f64,
}

/// Variable layout: every non-anchor vertex owns one 3-block.
struct Problem {
    ids: Vec<VertexId>,
    index: BTreeMap<VertexId, usize>,
    poses: BTreeMap<VertexId, Pose2>,
    edges: Vec<Edge>,
    symbolic: Symbolic,
}

impl Problem {
    fn new(map: &CognitiveMap, anchor: VertexId) -> Self {
        let ids: Vec<VertexId> = map
            .vertices()
            .map(|v| v.id)
            .filter(|&v| v != anchor)
            .collect();
        let index: BTreeMap<VertexId, usize> =
            ids.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut nbrs = vec![BTreeSet::new(); ids.len()];
        for e in map.edges() {
            if let (Some(&a), Some(&b)) = (index.get(&e.from), index.get(&e.to)) {
                nbrs[a].insert(b);
                nbrs[b].insert(a);
            }
        }
        Problem {
            symbolic: Symbolic::analyze(&nbrs),
            poses: map.vertices().map(|v| (v.id, v.pose)).collect(),
            edges: map.edges().cloned().collect(),
            ids,
            index,
        }
    }
}

fn linearize(edge: &Edge, poses: &BTreeMap<VertexId, Pose2>, cfg: &SolverConfig) -> ResidualBlock {
    let (pi, pj) = (&poses[&edge.from], &poses[&edge.to]);
    let r = residual(pi, pj, &edge.constraint);
    let (ji, jj) = residual_jacobians(pi, pj, &edge.constraint);
    let w = (cfg.edge_weight)(edge);
    let s = w * r.norm_squared();
    ResidualBlock {
        edge: edge.id,
        residual: r,
        jacobian_from: ji,
        jacobian_to: jj,
        robust_weight: cfg.loss.weight(s) * w,
        rho: cfg.loss.rho(s),
    }
}

fn edge_cost(edge: &Edge, poses: &BTreeMap<VertexId, Pose2>, cfg: &SolverConfig) -> f64 {
    let r = residual(&poses[&edge.from], &poses[&edge.to], &edge.constraint);
    cfg.loss.rho((cfg.edge_weight)(edge) * r.norm_squared())
}

/// Per-edge map, evaluated in parallel when enabled. Output order always
/// follows `edges`, so reductions over it are partition-independent.
fn map_edges<T: Send>(
    edges: &[Edge],
    parallel: bool,
    f: impl Fn(&Edge) -> T + Sync + Send,
) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return edges.par_iter().map(f).collect();
    }
    let _ = parallel;
    edges.iter().map(f).collect()
}

/// All residual blocks of `map` at its current poses.
pub fn linearize_map(map: &CognitiveMap, cfg: &SolverConfig) -> Vec<ResidualBlock> {
    let poses: BTreeMap<VertexId, Pose2> = map.vertices().map(|v| (v.id, v.pose)).collect();
    let edges: Vec<Edge> = map.edges().cloned().collect();
    map_edges(&edges, cfg.parallel, |e| linearize(e, &poses, cfg))
}

/// Total robust cost `½ Σ ρ` of the map at its current poses.
pub fn total_cost(map: &CognitiveMap, cfg: &SolverConfig) -> f64 {
    let poses: BTreeMap<VertexId, Pose2> = map.vertices().map(|v| (v.id, v.pose)).collect();
    let edges: Vec<Edge> = map.edges().cloned().collect();
    cost_of(&edges, &poses, cfg)
}

fn cost_of(edges: &[Edge], poses: &BTreeMap<VertexId, Pose2>, cfg: &SolverConfig) -> f64 {
    0.5 * map_edges(edges, cfg.parallel, |e| edge_cost(e, poses, cfg))
        .into_iter()
        .sum::<f64>()
}

/// Optimizes all vertex poses in place.
pub fn optimize(map: &mut CognitiveMap, cfg: &SolverConfig) -> Result<OptimizeReport> {
    cfg.validate()?;
    let anchor = match cfg.anchor {
        Some(a) if map.contains_vertex(a) => a,
        Some(a) => return Err(Error::UnknownVertex(a)),
        None => map.first_vertex().ok_or(Error::EmptyMap)?,
    };
    if !map.is_connected() {
        return Err(Error::Singular);
    }

    let mut problem = Problem::new(map, anchor);
    let n = problem.ids.len();
    let mut cost = cost_of(&problem.edges, &problem.poses, cfg);
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let initial_cost = cost;
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        let blocks = map_edges(&problem.edges, cfg.parallel, |e| {
            linearize(e, &problem.poses, cfg)
        });
        let mut h = BlockMatrix::zeros(n);
        let mut g = vec![Vector3::zeros(); n];
        for (edge, b) in problem.edges.iter().zip(&blocks) {
            let i = problem.index.get(&edge.from).copied();
            let j = problem.index.get(&edge.to).copied();
            let w = b.robust_weight;
            if let Some(i) = i {
                h.add(i, i, &(b.jacobian_from.transpose() * b.jacobian_from * w));
                g[i] += b.jacobian_from.transpose() * b.residual * w;
            }
            if let Some(j) = j {
                h.add(j, j, &(b.jacobian_to.transpose() * b.jacobian_to * w));
                g[j] += b.jacobian_to.transpose() * b.residual * w;
            }
            if let (Some(i), Some(j)) = (i, j) {
                h.add(i, j, &(b.jacobian_from.transpose() * b.jacobian_to * w));
            }
        }

        let grad_norm = g.iter().map(|v| v.amax()).fold(0.0, f64::max);
        if grad_norm <= cfg.gradient_tolerance {
            converged = true;
            break;
        }

        let rhs: Vec<Vector3<f64>> = g.iter().map(|v| -v).collect();
        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let mut damped = h.clone();
            damped.add_to_diagonal(lambda);
            let Some(factor) = Factor::new(&problem.symbolic, &damped) else {
                lambda *= cfg.damping_up;
                continue;
            };
            let step = factor.solve(&rhs);
            let mut trial = problem.poses.clone();
            for (k, id) in problem.ids.iter().enumerate() {
                let p = trial[id];
                let d = step[k];
                trial.insert(
                    *id,
                    Pose2::new(p.x() + d[0], p.y() + d[1], p.theta() + d[2]),
                );
            }
            let trial_cost = cost_of(&problem.edges, &trial, cfg);
            if trial_cost.is_finite() && trial_cost < cost {
                let decrease = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                problem.poses = trial;
                cost = trial_cost;
                lambda = (lambda / cfg.damping_down).max(f64::MIN_POSITIVE);
                iterations += 1;
                accepted = true;
                if decrease <= cfg.relative_cost_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= cfg.damping_up;
        }
        if !accepted {
            // No step lowers the cost: we sit at a (numerical) minimum.
            if !h.is_finite() {
                return Err(Error::NonFiniteCost);
            }
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    for (id, pose) in &problem.poses {
        map.set_pose(*id, *pose)?;
    }
    Ok(OptimizeReport {
        iterations,
        initial_cost,
        final_cost: cost,
        converged,
    })
}
