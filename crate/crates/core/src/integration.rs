//! Scene integration: folding revisited vertices back into the map.
//!
//! After a cluster has been optimized, every loop edge whose endpoints now
//! coincide (within `merge_radius`) is contracted: the newer endpoint is
//! deleted and its other edges are re-expressed from the older endpoint by
//! SE(2) composition. Vertices left stranded between two such survivors are
//! then dropped, and very short sequential edges are contracted the same
//! way.
//!
//! Every removal is either an edge contraction or the deletion of a vertex
//! whose two neighbours are already joined directly, so the graph stays
//! connected.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clustering::LoopCluster;
use crate::error::{Error, Result};
use crate::geometry::RelativeConstraint;
use crate::map::{CognitiveMap, EdgeId, EdgeKind, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    /// Post-optimization distance under which two loop-connected vertices
    /// count as the same place, meters.
    pub merge_radius: f64,
    /// Sequential edges at most this long are contracted, meters.
    pub short_edge_threshold: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            merge_radius: 0.05,
            short_edge_threshold: 0.02,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.merge_radius > 0.0
            && self.short_edge_threshold > 0.0
            && self.short_edge_threshold <= self.merge_radius
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "need 0 < short_edge_threshold <= merge_radius, got {self:?}"
            )))
        }
    }
}

/// A removed vertex and where its role went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Redirect {
    pub removed: VertexId,
    pub survivor: VertexId,
    /// Pose of the survivor seen from the removed vertex.
    pub removed_to_survivor: RelativeConstraint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub removed_vertices: Vec<VertexId>,
    pub removed_edges: Vec<EdgeId>,
    /// Edges kept under their id but moved onto new endpoints.
    pub merged_edges: Vec<EdgeId>,
    pub redirects: Vec<Redirect>,
}

impl IntegrationReport {
    pub fn is_empty(&self) -> bool {
        self.removed_vertices.is_empty()
            && self.removed_edges.is_empty()
            && self.merged_edges.is_empty()
    }

    pub fn extend(&mut self, other: IntegrationReport) {
        self.removed_vertices.extend(other.removed_vertices);
        self.removed_edges.extend(other.removed_edges);
        self.merged_edges.extend(other.merged_edges);
        self.redirects.extend(other.redirects);
    }
}

/// Scene integration with memory of which edges were carried over from
/// removed vertices.
#[derive(Debug, Clone, Default)]
pub struct SceneIntegrator {
    cfg: IntegrationConfig,
    rerouted: BTreeSet<EdgeId>,
}

impl SceneIntegrator {
    pub fn new(cfg: IntegrationConfig) -> Self {
        SceneIntegrator {
            cfg,
            rerouted: BTreeSet::new(),
        }
    }

    pub fn config(&self) -> &IntegrationConfig {
        &self.cfg
    }

    /// Live edges that were moved off a removed vertex.
    pub fn rerouted(&self) -> &BTreeSet<EdgeId> {
        &self.rerouted
    }

    /// Contracts the cluster's loop edges whose endpoints coincide, then
    /// drops interior revisit vertices.
    pub fn integrate_cluster(
        &mut self,
        map: &mut CognitiveMap,
        cluster: &LoopCluster,
    ) -> Result<IntegrationReport> {
        let mut report = IntegrationReport::default();
        let mut order: Vec<(f64, EdgeId)> = cluster
            .edges
            .iter()
            .zip(&cluster.stamps)
            .map(|(&e, &t)| (t, e))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        for (_, id) in order {
            let Some(edge) = map.edge(id) else { continue };
            let (newer, older) = if edge.from > edge.to {
                (edge.from, edge.to)
            } else {
                (edge.to, edge.from)
            };
            if map.pose(newer)?.distance(&map.pose(older)?) > self.cfg.merge_radius {
                continue;
            }
            let to_older = edge.constraint_from(newer);
            self.contract(map, newer, older, to_older, &mut report)?;
        }
        if !report.is_empty() {
            self.drop_interior_revisits(map, &mut report)?;
        }
        Ok(report)
    }

    /// Contracts sequential edges no longer than the threshold, shortest
    /// first, until none remain. An edge whose newer endpoint is `keep` is
    /// left alone.
    pub fn remove_short_edges(
        &mut self,
        map: &mut CognitiveMap,
        keep: Option<VertexId>,
    ) -> Result<IntegrationReport> {
        let mut report = IntegrationReport::default();
        loop {
            let shortest = map
                .edges()
                .filter(|e| {
                    e.kind == EdgeKind::Sequential
                        && e.constraint.d() <= self.cfg.short_edge_threshold
                        && Some(e.from.max(e.to)) != keep
                })
                .min_by(|a, b| {
                    a.constraint
                        .d()
                        .total_cmp(&b.constraint.d())
                        .then(a.id.cmp(&b.id))
                })
                .map(|e| (e.from.max(e.to), e.from.min(e.to), e.id));
            let Some((newer, older, id)) = shortest else {
                break;
            };
            let to_older = map.edge(id).expect("just found").constraint_from(newer);
            self.contract(map, newer, older, to_older, &mut report)?;
        }
        Ok(report)
    }

    /// Deletes `v`, re-expressing its other edges from `k`. `v_to_k` is the
    /// pose of `k` seen from `v`. Edges that would become self-loops or
    /// duplicate an existing connection are dropped.
    fn contract(
        &mut self,
        map: &mut CognitiveMap,
        v: VertexId,
        k: VertexId,
        v_to_k: RelativeConstraint,
        report: &mut IntegrationReport,
    ) -> Result<()> {
        let incident: Vec<EdgeId> = map.incident_edges(v).map(|e| e.id).collect();
        let k_to_v = v_to_k.inverse();
        for id in incident {
            let edge = map.edge(id).ok_or(Error::UnknownEdge(id))?.clone();
            let other = edge.other(v);
            if other == k || map.edge_between(other, k).is_some() {
                map.remove_edge(id)?;
                self.rerouted.remove(&id);
                report.removed_edges.push(id);
                continue;
            }
            if edge.from == v {
                map.reroute_edge(id, k, other, k_to_v.compose(&edge.constraint))?;
            } else {
                map.reroute_edge(id, other, k, edge.constraint.compose(&v_to_k))?;
            }
            self.rerouted.insert(id);
            report.merged_edges.push(id);
        }
        map.remove_vertex(v)?;
        report.removed_vertices.push(v);
        report.redirects.push(Redirect {
            removed: v,
            survivor: k,
            removed_to_survivor: v_to_k,
        });
        Ok(())
    }

    /// Removes vertices left between two survivors of contractions: no loop
    /// edges, one sequential edge in from `a` and one out to `b`, both edges
    /// carried over from removed vertices, and `a` and `b` both older. If
    /// `a` and `b` are already joined the vertex goes with its edges;
    /// otherwise its two edges are composed into one.
    fn drop_interior_revisits(
        &mut self,
        map: &mut CognitiveMap,
        report: &mut IntegrationReport,
    ) -> Result<()> {
        loop {
            let candidate = map.vertices().rev().find_map(|u| {
                let u = u.id;
                if map.degree(u) != 2 {
                    return None;
                }
                let mut inc = map.incident_edges(u);
                let (e1, e2) = (inc.next()?, inc.next()?);
                if e1.kind != EdgeKind::Sequential || e2.kind != EdgeKind::Sequential {
                    return None;
                }
                let (into, out) = match (e1.to == u, e2.to == u) {
                    (true, false) => (e1, e2),
                    (false, true) => (e2, e1),
                    _ => return None,
                };
                let (a, b) = (into.from, out.to);
                let qualifies = a != b
                    && a < u
                    && b < u
                    && self.rerouted.contains(&into.id)
                    && self.rerouted.contains(&out.id);
                qualifies.then_some((u, into.id, out.id, a, b))
            });
            let Some((u, into, out, a, b)) = candidate else {
                return Ok(());
            };
            let a_to_u = map.edge(into).expect("incident").constraint;
            let u_to_b = map.edge(out).expect("incident").constraint;
            if map.edge_between(a, b).is_some() {
                map.remove_edge(into)?;
                self.rerouted.remove(&into);
                report.removed_edges.push(into);
            } else {
                map.reroute_edge(into, a, b, a_to_u.compose(&u_to_b))?;
                report.merged_edges.push(into);
            }
            map.remove_edge(out)?;
            self.rerouted.remove(&out);
            report.removed_edges.push(out);
            map.remove_vertex(u)?;
            report.removed_vertices.push(u);
            report.redirects.push(Redirect {
                removed: u,
                survivor: a,
                removed_to_survivor: a_to_u.inverse(),
            });
        }
    }
}

/// One-shot [`SceneIntegrator::integrate_cluster`] without revisit memory
/// from earlier clusters.
pub fn integrate_cluster(
    map: &mut CognitiveMap,
    cluster: &LoopCluster,
    cfg: &IntegrationConfig,
) -> Result<IntegrationReport> {
    SceneIntegrator::new(*cfg).integrate_cluster(map, cluster)
}

pub fn remove_short_edges(
    map: &mut CognitiveMap,
    cfg: &IntegrationConfig,
    keep: Option<VertexId>,
) -> Result<IntegrationReport> {
    SceneIntegrator::new(*cfg).remove_short_edges(map, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ClusterState;
    use crate::geometry::{wrap_angle, Pose2};
    use std::f64::consts::FRAC_PI_2;

    fn cluster(edges: &[EdgeId]) -> LoopCluster {
        LoopCluster {
            id: 0,
            edges: edges.to_vec(),
            stamps: (0..edges.len()).map(|k| k as f64).collect(),
            t_start: 0.0,
            t_last: edges.len() as f64,
            state: ClusterState::Closed,
        }
    }

    fn seq(map: &mut CognitiveMap, a: u64, b: u64, c: RelativeConstraint) -> EdgeId {
        map.add_edge(VertexId(a), VertexId(b), c, EdgeKind::Sequential, b as f64)
            .unwrap()
    }

    fn close(a: &RelativeConstraint, b: &RelativeConstraint) -> bool {
        let (ax, ay, af) = a.to_xy();
        let (bx, by, bf) = b.to_xy();
        (ax - bx).abs() < 1e-9 && (ay - by).abs() < 1e-9 && wrap_angle(af - bf).abs() < 1e-9
    }

    /// k=0 -> 1 -> i=2 -> i+1=3 -> i+2=4, loop 3 -> 0 with 3 sitting on 0.
    fn fig4a() -> (CognitiveMap, EdgeId) {
        let mut m = CognitiveMap::new();
        let poses = [(0.0, 0.0), (1.0, 0.0), (1.0, -1.0), (0.0, 0.01), (0.0, 1.0)];
        for (k, (x, y)) in poses.iter().enumerate() {
            m.add_vertex(Pose2::new(*x, *y, 0.0), k as f64).unwrap();
        }
        seq(&mut m, 0, 1, RelativeConstraint::new(1.0, 0.0, 0.0));
        seq(&mut m, 1, 2, RelativeConstraint::new(1.0, -FRAC_PI_2, 0.0));
        seq(&mut m, 2, 3, RelativeConstraint::new(1.0, 0.0, 0.0));
        seq(&mut m, 3, 4, RelativeConstraint::new(1.0, 0.0, 0.0));
        let lp = m
            .add_edge(
                VertexId(3),
                VertexId(0),
                RelativeConstraint::new(0.0, 0.0, FRAC_PI_2),
                EdgeKind::LoopClosure,
                5.0,
            )
            .unwrap();
        (m, lp)
    }

    #[test]
    fn fig4a_contracts_three_edges_into_two() {
        let (mut m, lp) = fig4a();
        let (v0, e0) = (m.vertex_count(), m.edge_count());
        let r = integrate_cluster(&mut m, &cluster(&[lp]), &IntegrationConfig::default()).unwrap();
        assert_eq!(m.vertex_count(), v0 - 1);
        assert_eq!(m.edge_count(), e0 - 1);
        assert_eq!(r.removed_vertices, vec![VertexId(3)]);
        assert!(m.check_invariants());

        // forward 1 then turn 90° in place
        let e_ik = m
            .edge(m.edge_between(VertexId(2), VertexId(0)).unwrap())
            .unwrap();
        assert_eq!((e_ik.from, e_ik.to), (VertexId(2), VertexId(0)));
        assert!(close(
            &e_ik.constraint,
            &RelativeConstraint::new(1.0, 0.0, FRAC_PI_2)
        ));
        // undo the 90° turn, then forward 1: lands at -90° heading
        let e_kj = m
            .edge(m.edge_between(VertexId(0), VertexId(4)).unwrap())
            .unwrap();
        assert_eq!((e_kj.from, e_kj.to), (VertexId(0), VertexId(4)));
        assert!(close(
            &e_kj.constraint,
            &RelativeConstraint::new(1.0, -FRAC_PI_2, -FRAC_PI_2)
        ));
        assert_eq!(r.redirects[0].survivor, VertexId(0));
    }

    #[test]
    fn far_apart_endpoints_are_left_alone() {
        let (mut m, lp) = fig4a();
        m.set_pose(VertexId(3), Pose2::new(0.5, 0.0, 0.0)).unwrap();
        let before = m.clone();
        let r = integrate_cluster(&mut m, &cluster(&[lp]), &IntegrationConfig::default()).unwrap();
        assert!(r.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn several_loops_into_one_vertex_collapse() {
        // 0 -> 1 -> 2 -> 3, with 2 and 3 both revisiting 0
        let mut m = CognitiveMap::new();
        for k in 0..4 {
            let p = if k >= 2 {
                Pose2::new(0.01 * (k - 2) as f64, 0.0, 0.0)
            } else {
                Pose2::new(k as f64, 0.0, 0.0)
            };
            m.add_vertex(p, k as f64).unwrap();
        }
        let step = RelativeConstraint::new(1.0, 0.0, 0.0);
        seq(&mut m, 0, 1, step);
        seq(&mut m, 1, 2, step);
        seq(&mut m, 2, 3, RelativeConstraint::new(0.01, 0.0, 0.0));
        let l1 = m
            .add_edge(
                VertexId(2),
                VertexId(0),
                RelativeConstraint::IDENTITY,
                EdgeKind::LoopClosure,
                4.0,
            )
            .unwrap();
        let l2 = m
            .add_edge(
                VertexId(3),
                VertexId(0),
                RelativeConstraint::new(0.01, std::f64::consts::PI, 0.0),
                EdgeKind::LoopClosure,
                5.0,
            )
            .unwrap();
        integrate_cluster(&mut m, &cluster(&[l1, l2]), &IntegrationConfig::default()).unwrap();
        // 1 -> 0 would duplicate 0 -> 1
        assert_eq!(m.vertex_count(), 2);
        assert_eq!(m.edge_count(), 1);
        assert!(m.check_invariants());
    }

    #[test]
    fn interior_revisit_vertex_is_dropped() {
        // lap 1: 0 -> 1 -> 2 ; lap 2: 3 (on 0) -> 4 (between) -> 5 (on 2)
        let mut m = CognitiveMap::new();
        let xs = [0.0, 1.0, 2.0, 0.0, 1.3, 2.0];
        for (k, x) in xs.iter().enumerate() {
            m.add_vertex(Pose2::new(*x, 0.0, 0.0), k as f64).unwrap();
        }
        let step = RelativeConstraint::new(1.0, 0.0, 0.0);
        seq(&mut m, 0, 1, step);
        seq(&mut m, 1, 2, step);
        seq(
            &mut m,
            2,
            3,
            RelativeConstraint::new(2.0, std::f64::consts::PI, 0.0),
        );
        seq(&mut m, 3, 4, RelativeConstraint::new(1.3, 0.0, 0.0));
        seq(&mut m, 4, 5, RelativeConstraint::new(0.7, 0.0, 0.0));
        let l1 = m
            .add_edge(
                VertexId(3),
                VertexId(0),
                RelativeConstraint::IDENTITY,
                EdgeKind::LoopClosure,
                6.0,
            )
            .unwrap();
        let l2 = m
            .add_edge(
                VertexId(5),
                VertexId(2),
                RelativeConstraint::IDENTITY,
                EdgeKind::LoopClosure,
                7.0,
            )
            .unwrap();
        let mut integ = SceneIntegrator::new(IntegrationConfig::default());
        let r = integ
            .integrate_cluster(&mut m, &cluster(&[l1, l2]))
            .unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert!(r.removed_vertices.contains(&VertexId(4)));
        assert!(m.check_invariants());
    }

    #[test]
    fn interior_rule_leaves_genuine_places() {
        // vertex 2 of the fig4a chain keeps its original incoming edge
        let (mut m, lp) = fig4a();
        let mut integ = SceneIntegrator::new(IntegrationConfig::default());
        integ.integrate_cluster(&mut m, &cluster(&[lp])).unwrap();
        assert!(m.contains_vertex(VertexId(2)));
    }

    #[test]
    fn short_edge_chain() {
        let mut m = CognitiveMap::new();
        for (k, x) in [0.0, 0.01, 1.01].iter().enumerate() {
            m.add_vertex(Pose2::new(*x, 0.0, 0.0), k as f64).unwrap();
        }
        seq(&mut m, 0, 1, RelativeConstraint::new(0.01, 0.0, 0.0));
        seq(&mut m, 1, 2, RelativeConstraint::new(1.0, 0.0, 0.0));
        let r = remove_short_edges(&mut m, &IntegrationConfig::default(), None).unwrap();
        assert_eq!(r.removed_vertices, vec![VertexId(1)]);
        assert_eq!(m.edge_count(), 1);
        let e = m.edges().next().unwrap();
        assert_eq!((e.from, e.to), (VertexId(0), VertexId(2)));
        assert!((e.constraint.d() - 1.01).abs() < 1e-12);
    }

    #[test]
    fn kept_vertex_survives_short_edge_pass() {
        let mut m = CognitiveMap::new();
        for (k, x) in [0.0, 1.0, 1.01].iter().enumerate() {
            m.add_vertex(Pose2::new(*x, 0.0, 0.0), k as f64).unwrap();
        }
        seq(&mut m, 0, 1, RelativeConstraint::new(1.0, 0.0, 0.0));
        seq(&mut m, 1, 2, RelativeConstraint::new(0.01, 0.0, 0.0));
        let before = m.clone();
        let r =
            remove_short_edges(&mut m, &IntegrationConfig::default(), Some(VertexId(2))).unwrap();
        assert!(r.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn fig5b_removes_vertex_and_both_edges() {
        let mut m = CognitiveMap::new();
        for (k, x) in [0.0, 0.01, 1.01].iter().enumerate() {
            m.add_vertex(Pose2::new(*x, 0.0, 0.0), k as f64).unwrap();
        }
        let e01 = seq(&mut m, 0, 1, RelativeConstraint::new(0.01, 0.0, 0.0));
        let e12 = seq(&mut m, 1, 2, RelativeConstraint::new(1.0, 0.0, 0.0));
        let parallel = m
            .add_edge(
                VertexId(0),
                VertexId(2),
                RelativeConstraint::new(1.01, 0.0, 0.0),
                EdgeKind::LoopClosure,
                3.0,
            )
            .unwrap();
        let r = remove_short_edges(&mut m, &IntegrationConfig::default(), None).unwrap();
        assert_eq!(r.removed_vertices, vec![VertexId(1)]);
        let removed: BTreeSet<EdgeId> = r.removed_edges.iter().copied().collect();
        assert_eq!(removed, BTreeSet::from([e01, e12]));
        assert!(m.edge(parallel).is_some());
        assert!(m.check_invariants());
    }

    #[test]
    fn long_edges_untouched_and_passes_idempotent() {
        let (mut m, lp) = fig4a();
        let before = m.clone();
        assert!(
            remove_short_edges(&mut m, &IntegrationConfig::default(), None)
                .unwrap()
                .is_empty()
        );
        assert_eq!(m, before);

        let mut integ = SceneIntegrator::new(IntegrationConfig::default());
        integ.integrate_cluster(&mut m, &cluster(&[lp])).unwrap();
        let once = m.clone();
        assert!(integ
            .integrate_cluster(&mut m, &cluster(&[lp]))
            .unwrap()
            .is_empty());
        assert!(integ.remove_short_edges(&mut m, None).unwrap().is_empty());
        assert_eq!(m, once);
    }

    #[test]
    fn config_validation() {
        assert!(IntegrationConfig::default().validate().is_ok());
        let bad = IntegrationConfig {
            merge_radius: 0.01,
            short_edge_threshold: 0.02,
        };
        assert!(bad.validate().is_err());
    }
}
