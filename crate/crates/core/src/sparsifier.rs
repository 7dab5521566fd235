//! Neighborhood-field gating of sequential vertices.
//!
//! Odometry steps are folded into a pending constraint until the movement
//! since the last kept vertex is novel enough, `g(d, θ) > δ`, at which point a
//! single vertex and a single composed sequential edge are added. Everything
//! in between is never stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RelativeConstraint;
use crate::map::{CognitiveMap, EdgeKind, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    /// Translation weight, 1/m.
    pub alpha: f64,
    /// Rotation weight, 1/rad.
    pub beta: f64,
    /// Threshold on `g`. Values below 1 keep every step, since `g ≥ 1`.
    pub delta_threshold: f64,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        NeighborhoodConfig {
            alpha: 10.0,
            beta: 10.0,
            delta_threshold: 3.746,
        }
    }
}

impl NeighborhoodConfig {
    /// Gate that keeps every odometry step (the unsparsified baseline).
    pub fn keep_all() -> Self {
        NeighborhoodConfig {
            delta_threshold: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.delta_threshold >= 0.0
            && self.delta_threshold.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "bad neighborhood field {self:?}"
            )))
        }
    }
}

/// `g(d, θ) = (1 + α d)(1 + β θ)`.
pub fn neighborhood_field(d: f64, theta: f64, cfg: &NeighborhoodConfig) -> f64 {
    (1.0 + cfg.alpha * d) * (1.0 + cfg.beta * theta)
}

/// Motion accumulated since the last kept vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodAccumulator {
    pub anchor_vertex: VertexId,
    /// Composition of all odometry since the anchor.
    pub pending: RelativeConstraint,
    /// Path length since the anchor.
    pub d_acc: f64,
    /// Absolute rotation since the anchor.
    pub theta_acc: f64,
    pub t_last: f64,
}

impl NeighborhoodAccumulator {
    pub fn new(anchor_vertex: VertexId, t_start: f64) -> Self {
        NeighborhoodAccumulator {
            anchor_vertex,
            pending: RelativeConstraint::IDENTITY,
            d_acc: 0.0,
            theta_acc: 0.0,
            t_last: t_start,
        }
    }

    /// Anchors on the most recent vertex of `map`.
    pub fn for_map(map: &CognitiveMap) -> Result<Self> {
        let id = map.last_vertex().ok_or(Error::EmptyMap)?;
        let stamp = map.vertex(id).map_or(0.0, |v| v.stamp);
        Ok(Self::new(id, stamp))
    }

    pub fn has_pending_motion(&self) -> bool {
        self.pending != RelativeConstraint::IDENTITY || self.d_acc > 0.0 || self.theta_acc > 0.0
    }

    fn reset(&mut self, anchor: VertexId) {
        self.anchor_vertex = anchor;
        self.pending = RelativeConstraint::IDENTITY;
        self.d_acc = 0.0;
        self.theta_acc = 0.0;
    }

    /// Moves the anchor to `new_anchor`, where `anchor_to_new` is the pose of
    /// the new anchor seen from the old one. Pending motion is re-expressed
    /// from the new anchor.
    pub fn rebase(&mut self, new_anchor: VertexId, anchor_to_new: &RelativeConstraint) {
        self.pending = anchor_to_new.inverse().compose(&self.pending);
        self.anchor_vertex = new_anchor;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    Kept(VertexId),
    Skipped,
}

/// Feeds one odometry step through the gate.
pub fn ingest_odometry(
    map: &mut CognitiveMap,
    acc: &mut NeighborhoodAccumulator,
    step: &RelativeConstraint,
    stamp: f64,
    cfg: &NeighborhoodConfig,
) -> Result<Ingest> {
    if stamp < acc.t_last {
        return Err(Error::NonMonotoneStamp {
            prev: acc.t_last,
            got: stamp,
        });
    }
    if !map.contains_vertex(acc.anchor_vertex) {
        return Err(if map.is_empty() {
            Error::EmptyMap
        } else {
            Error::UnknownVertex(acc.anchor_vertex)
        });
    }
    acc.t_last = stamp;
    acc.pending = acc.pending.compose(step);
    acc.d_acc += step.d();
    acc.theta_acc += step.facing().abs();

    if neighborhood_field(acc.d_acc, acc.theta_acc, cfg) > cfg.delta_threshold {
        let id = emit_vertex(map, acc, stamp)?;
        Ok(Ingest::Kept(id))
    } else {
        Ok(Ingest::Skipped)
    }
}

/// Keeps a vertex for pending motion regardless of the gate. Returns the
/// vertex the robot now sits on (the anchor itself when nothing is pending).
pub fn flush_pending(
    map: &mut CognitiveMap,
    acc: &mut NeighborhoodAccumulator,
    stamp: f64,
) -> Result<VertexId> {
    if acc.has_pending_motion() {
        emit_vertex(map, acc, stamp.max(acc.t_last))
    } else {
        Ok(acc.anchor_vertex)
    }
}

fn emit_vertex(
    map: &mut CognitiveMap,
    acc: &mut NeighborhoodAccumulator,
    stamp: f64,
) -> Result<VertexId> {
    let pose = map.pose(acc.anchor_vertex)?.predict(&acc.pending);
    let id = map.add_vertex(pose, stamp)?;
    map.add_edge(
        acc.anchor_vertex,
        id,
        acc.pending,
        EdgeKind::Sequential,
        stamp,
    )?;
    acc.reset(id);
    Ok(id)
}

/// Left fold of `compose` over a chain of steps.
pub fn merged_chain_constraint(steps: &[RelativeConstraint]) -> Result<RelativeConstraint> {
    let (first, rest) = steps.split_first().ok_or(Error::EmptyChain)?;
    Ok(rest.iter().fold(*first, |acc, s| acc.compose(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use std::f64::consts::FRAC_PI_2;

    fn fresh() -> (CognitiveMap, NeighborhoodAccumulator) {
        let map = CognitiveMap::with_origin(Pose2::ORIGIN, 0.0);
        let acc = NeighborhoodAccumulator::for_map(&map).unwrap();
        (map, acc)
    }

    #[test]
    fn field_examples() {
        let cfg = NeighborhoodConfig::default();
        assert_eq!(neighborhood_field(0.0, 0.0, &cfg), 1.0);
        assert!((neighborhood_field(0.2746, 0.0, &cfg) - 3.746).abs() < 1e-12);
        assert!((neighborhood_field(0.1, 0.1, &cfg) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn straight_line_keeps_every_sixth_step() {
        let (mut map, mut acc) = fresh();
        let cfg = NeighborhoodConfig::default();
        let step = RelativeConstraint::new(0.05, 0.0, 0.0);
        let kept: Vec<usize> = (1..=30)
            .filter(|&k| {
                matches!(
                    ingest_odometry(&mut map, &mut acc, &step, k as f64, &cfg).unwrap(),
                    Ingest::Kept(_)
                )
            })
            .collect();
        assert_eq!(kept, vec![6, 12, 18, 24, 30]);
        assert_eq!(map.vertex_count(), 6);
        let e = map.edges().next().unwrap();
        assert!((e.constraint.d() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pure_rotation_threshold() {
        let cfg = NeighborhoodConfig::default();
        let (mut map, mut acc) = fresh();
        let r = ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::new(0.0, 0.0, 0.3),
            1.0,
            &cfg,
        );
        assert!(matches!(r.unwrap(), Ingest::Kept(_)));
        let (mut map, mut acc) = fresh();
        let r = ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::new(0.0, 0.0, 0.27),
            1.0,
            &cfg,
        );
        assert_eq!(r.unwrap(), Ingest::Skipped);
        // negative rotation counts by magnitude
        let (mut map, mut acc) = fresh();
        let r = ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::new(0.0, 0.0, -0.3),
            1.0,
            &cfg,
        );
        assert!(matches!(r.unwrap(), Ingest::Kept(_)));
    }

    #[test]
    fn identity_step_is_skipped_without_change() {
        let cfg = NeighborhoodConfig::default();
        let (mut map, mut acc) = fresh();
        ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::new(0.1, 0.2, 0.05),
            1.0,
            &cfg,
        )
        .unwrap();
        let before = acc;
        let r =
            ingest_odometry(&mut map, &mut acc, &RelativeConstraint::IDENTITY, 2.0, &cfg).unwrap();
        assert_eq!(r, Ingest::Skipped);
        assert_eq!(acc.pending, before.pending);
        assert_eq!((acc.d_acc, acc.theta_acc), (before.d_acc, before.theta_acc));
        assert_eq!(acc.anchor_vertex, before.anchor_vertex);
    }

    #[test]
    fn keep_all_keeps_identity_steps() {
        let (mut map, mut acc) = fresh();
        let r = ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::IDENTITY,
            1.0,
            &NeighborhoodConfig::keep_all(),
        );
        assert!(matches!(r.unwrap(), Ingest::Kept(_)));
    }

    #[test]
    fn errors() {
        let cfg = NeighborhoodConfig::default();
        let (mut map, mut acc) = fresh();
        ingest_odometry(&mut map, &mut acc, &RelativeConstraint::IDENTITY, 5.0, &cfg).unwrap();
        assert!(matches!(
            ingest_odometry(&mut map, &mut acc, &RelativeConstraint::IDENTITY, 4.0, &cfg),
            Err(Error::NonMonotoneStamp { .. })
        ));
        let mut empty = CognitiveMap::new();
        assert!(matches!(
            NeighborhoodAccumulator::for_map(&empty),
            Err(Error::EmptyMap)
        ));
        let mut acc = NeighborhoodAccumulator::new(VertexId(0), 0.0);
        assert!(matches!(
            ingest_odometry(
                &mut empty,
                &mut acc,
                &RelativeConstraint::IDENTITY,
                1.0,
                &cfg
            ),
            Err(Error::EmptyMap)
        ));
        assert!(NeighborhoodConfig { alpha: -1.0, ..cfg }
            .validate()
            .is_err());
    }

    #[test]
    fn flush_creates_vertex_only_with_pending_motion() {
        let cfg = NeighborhoodConfig::default();
        let (mut map, mut acc) = fresh();
        assert_eq!(flush_pending(&mut map, &mut acc, 0.0).unwrap(), VertexId(0));
        ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::new(0.05, 0.0, 0.0),
            1.0,
            &cfg,
        )
        .unwrap();
        let v = flush_pending(&mut map, &mut acc, 1.0).unwrap();
        assert_eq!(v, VertexId(1));
        assert!((map.pose(v).unwrap().x() - 0.05).abs() < 1e-15);
        assert!(!acc.has_pending_motion());
    }

    #[test]
    fn chain_fold_examples() {
        let c = RelativeConstraint::new(0.4, 1.0, -0.2);
        assert_eq!(merged_chain_constraint(&[c]).unwrap(), c);
        let unit = RelativeConstraint::new(1.0, 0.0, 0.0);
        let r = merged_chain_constraint(&[unit, unit, unit]).unwrap();
        assert_eq!((r.d(), r.heading(), r.facing()), (3.0, 0.0, 0.0));
        let turn = RelativeConstraint::new(1.0, 0.0, FRAC_PI_2);
        let r = merged_chain_constraint(&[turn; 4]).unwrap();
        assert!(r.d() < 1e-12);
        assert!(crate::geometry::wrap_angle(r.facing()).abs() < 1e-12);
        assert!(matches!(
            merged_chain_constraint(&[]),
            Err(Error::EmptyChain)
        ));
    }

    #[test]
    fn rebase_preserves_robot_pose() {
        let cfg = NeighborhoodConfig::default();
        let (mut map, mut acc) = fresh();
        ingest_odometry(
            &mut map,
            &mut acc,
            &RelativeConstraint::new(0.1, 0.3, 0.1),
            1.0,
            &cfg,
        )
        .unwrap();
        let robot = map.pose(acc.anchor_vertex).unwrap().predict(&acc.pending);
        let other = map.add_vertex(Pose2::new(-0.2, 0.4, 1.0), 2.0).unwrap();
        let to_other = map
            .pose(acc.anchor_vertex)
            .unwrap()
            .between(&map.pose(other).unwrap());
        acc.rebase(other, &to_other);
        let again = map.pose(other).unwrap().predict(&acc.pending);
        assert!(robot.distance(&again) < 1e-12);
    }
}
