//! The cognitive map: pose vertices joined by sequential and loop-closure
//! edges.
//!
//! Ids are handed out monotonically and never reused, so an id that appears
//! in a log stays unambiguous after the vertex or edge is deleted.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, RelativeConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Sequential,
    LoopClosure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub pose: Pose2,
    pub stamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: VertexId,
    pub to: VertexId,
    pub constraint: RelativeConstraint,
    pub kind: EdgeKind,
    pub stamp: f64,
}

impl Edge {
    pub fn touches(&self, v: VertexId) -> bool {
        self.from == v || self.to == v
    }

    /// The endpoint opposite `v`.
    pub fn other(&self, v: VertexId) -> VertexId {
        if self.from == v {
            self.to
        } else {
            self.from
        }
    }

    /// Constraint read in the direction `start -> other(start)`.
    pub fn constraint_from(&self, start: VertexId) -> RelativeConstraint {
        if self.from == start {
            self.constraint
        } else {
            self.constraint.inverse()
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CognitiveMap {
    vertices: BTreeMap<VertexId, Vertex>,
    edges: BTreeMap<EdgeId, Edge>,
    adjacency: BTreeMap<VertexId, BTreeSet<EdgeId>>,
    next_vertex: u64,
    next_edge: u64,
}

// Id allocators are bookkeeping; two maps with the same content are equal.
impl PartialEq for CognitiveMap {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.edges == other.edges
            && self.adjacency == other.adjacency
    }
}

impl CognitiveMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// A map holding a single vertex at `pose`.
    pub fn with_origin(pose: Pose2, stamp: f64) -> Self {
        let mut map = Self::new();
        map.add_vertex(pose, stamp)
            .expect("empty map accepts any stamp");
        map
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn contains_vertex(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    pub fn pose(&self, id: VertexId) -> Result<Pose2> {
        self.vertices
            .get(&id)
            .map(|v| v.pose)
            .ok_or(Error::UnknownVertex(id))
    }

    pub fn set_pose(&mut self, id: VertexId, pose: Pose2) -> Result<()> {
        let v = self.vertices.get_mut(&id).ok_or(Error::UnknownVertex(id))?;
        v.pose = pose;
        Ok(())
    }

    /// Vertices in ascending id order.
    pub fn vertices(&self) -> impl DoubleEndedIterator<Item = &Vertex> + '_ {
        self.vertices.values()
    }

    /// Edges in ascending id order.
    pub fn edges(&self) -> impl DoubleEndedIterator<Item = &Edge> + '_ {
        self.edges.values()
    }

    pub fn incident_edges(&self, v: VertexId) -> impl Iterator<Item = &Edge> + '_ {
        self.adjacency
            .get(&v)
            .into_iter()
            .flatten()
            .map(move |id| &self.edges[id])
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency.get(&v).map_or(0, BTreeSet::len)
    }

    pub fn first_vertex(&self) -> Option<VertexId> {
        self.vertices.keys().next().copied()
    }

    pub fn last_vertex(&self) -> Option<VertexId> {
        self.vertices.keys().next_back().copied()
    }

    /// Lowest-id edge joining `a` and `b` in either direction.
    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.incident_edges(a)
            .find(|e| e.other(a) == b && e.touches(b))
            .map(|e| e.id)
    }

    pub fn add_vertex(&mut self, pose: Pose2, stamp: f64) -> Result<VertexId> {
        let id = VertexId(self.next_vertex);
        self.insert_vertex(Vertex { id, pose, stamp })?;
        Ok(id)
    }

    /// Inserts a vertex with a caller-chosen id. The id allocator moves past
    /// it so later [`CognitiveMap::add_vertex`] calls stay unique.
    pub fn insert_vertex(&mut self, vertex: Vertex) -> Result<()> {
        if self.vertices.contains_key(&vertex.id) {
            return Err(Error::DuplicateVertex(vertex.id));
        }
        if !vertex.pose.is_finite() || !vertex.stamp.is_finite() {
            return Err(Error::NonFinite("vertex"));
        }
        if let Some(last) = self.vertices.values().next_back() {
            if vertex.id > last.id && vertex.stamp < last.stamp {
                return Err(Error::NonMonotoneStamp {
                    prev: last.stamp,
                    got: vertex.stamp,
                });
            }
        }
        self.next_vertex = self.next_vertex.max(vertex.id.0.saturating_add(1));
        self.adjacency.insert(vertex.id, BTreeSet::new());
        self.vertices.insert(vertex.id, vertex);
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        from: VertexId,
        to: VertexId,
        constraint: RelativeConstraint,
        kind: EdgeKind,
        stamp: f64,
    ) -> Result<EdgeId> {
        let id = EdgeId(self.next_edge);
        self.insert_edge(Edge {
            id,
            from,
            to,
            constraint,
            kind,
            stamp,
        })?;
        Ok(id)
    }

    pub fn insert_edge(&mut self, edge: Edge) -> Result<()> {
        if self.edges.contains_key(&edge.id) {
            return Err(Error::DuplicateEdge(edge.id));
        }
        self.check_endpoints(edge.from, edge.to, edge.kind, None)?;
        if !edge.constraint.is_finite() {
            return Err(Error::NonFinite("edge constraint"));
        }
        self.next_edge = self.next_edge.max(edge.id.0.saturating_add(1));
        self.link(&edge);
        self.edges.insert(edge.id, edge);
        Ok(())
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Result<Edge> {
        let edge = self.edges.remove(&id).ok_or(Error::UnknownEdge(id))?;
        self.unlink(&edge);
        Ok(edge)
    }

    /// Removes an isolated vertex. Callers detach its edges first.
    pub fn remove_vertex(&mut self, id: VertexId) -> Result<Vertex> {
        match self.adjacency.get(&id) {
            None => return Err(Error::UnknownVertex(id)),
            Some(inc) if !inc.is_empty() => return Err(Error::VertexNotIsolated(id)),
            Some(_) => {}
        }
        self.adjacency.remove(&id);
        Ok(self
            .vertices
            .remove(&id)
            .expect("adjacency mirrors vertices"))
    }

    /// Moves an existing edge onto new endpoints with a new constraint,
    /// keeping its id, kind and stamp.
    pub fn reroute_edge(
        &mut self,
        id: EdgeId,
        from: VertexId,
        to: VertexId,
        constraint: RelativeConstraint,
    ) -> Result<()> {
        let kind = self.edges.get(&id).ok_or(Error::UnknownEdge(id))?.kind;
        self.check_endpoints(from, to, kind, Some(id))?;
        let mut edge = self.edges.remove(&id).expect("checked above");
        self.unlink(&edge);
        edge.from = from;
        edge.to = to;
        edge.constraint = constraint;
        self.link(&edge);
        self.edges.insert(id, edge);
        Ok(())
    }

    fn check_endpoints(
        &self,
        from: VertexId,
        to: VertexId,
        kind: EdgeKind,
        ignore: Option<EdgeId>,
    ) -> Result<()> {
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        for v in [from, to] {
            if !self.vertices.contains_key(&v) {
                return Err(Error::UnknownVertex(v));
            }
        }
        if kind == EdgeKind::Sequential
            && self.incident_edges(from).any(|e| {
                Some(e.id) != ignore
                    && e.kind == EdgeKind::Sequential
                    && e.from == from
                    && e.to == to
            })
        {
            return Err(Error::DuplicateSequential { from, to });
        }
        Ok(())
    }

    fn link(&mut self, edge: &Edge) {
        for v in [edge.from, edge.to] {
            self.adjacency.entry(v).or_default().insert(edge.id);
        }
    }

    fn unlink(&mut self, edge: &Edge) {
        for v in [edge.from, edge.to] {
            if let Some(set) = self.adjacency.get_mut(&v) {
                set.remove(&edge.id);
            }
        }
    }

    /// Weakly connected (or empty).
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.first_vertex() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for e in self.incident_edges(v) {
                let w = e.other(v);
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == self.vertices.len()
    }

    /// Rebuilds the adjacency index from the edge list and compares.
    pub fn adjacency_consistent(&self) -> bool {
        let mut rebuilt: BTreeMap<VertexId, BTreeSet<EdgeId>> = self
            .vertices
            .keys()
            .map(|&v| (v, BTreeSet::new()))
            .collect();
        for e in self.edges.values() {
            for v in [e.from, e.to] {
                match rebuilt.get_mut(&v) {
                    Some(set) => {
                        set.insert(e.id);
                    }
                    None => return false,
                }
            }
        }
        rebuilt == self.adjacency
    }

    /// Map invariants: consistent index, no self-loops, no duplicate
    /// sequential pairs, weak connectivity.
    pub fn check_invariants(&self) -> bool {
        if !self.adjacency_consistent() || !self.is_connected() {
            return false;
        }
        let mut pairs = BTreeSet::new();
        self.edges.values().all(|e| {
            e.from != e.to && (e.kind != EdgeKind::Sequential || pairs.insert((e.from, e.to)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> RelativeConstraint {
        RelativeConstraint::new(1.0, 0.0, 0.0)
    }

    fn chain(n: usize) -> CognitiveMap {
        let mut m = CognitiveMap::with_origin(Pose2::ORIGIN, 0.0);
        for i in 1..n {
            let prev = VertexId(i as u64 - 1);
            let v = m
                .add_vertex(Pose2::new(i as f64, 0.0, 0.0), i as f64)
                .unwrap();
            m.add_edge(prev, v, unit(), EdgeKind::Sequential, i as f64)
                .unwrap();
        }
        m
    }

    #[test]
    fn add_then_remove_edge_restores_map() {
        let original = chain(3);
        let mut m = original.clone();
        let e = m
            .add_edge(VertexId(2), VertexId(0), unit(), EdgeKind::LoopClosure, 3.0)
            .unwrap();
        assert_ne!(m, original);
        m.remove_edge(e).unwrap();
        assert_eq!(m, original);
        assert!(m.check_invariants());
    }

    #[test]
    fn ids_are_never_reused() {
        let mut m = chain(2);
        let e = m
            .add_edge(VertexId(1), VertexId(0), unit(), EdgeKind::LoopClosure, 2.0)
            .unwrap();
        m.remove_edge(e).unwrap();
        let e2 = m
            .add_edge(VertexId(1), VertexId(0), unit(), EdgeKind::LoopClosure, 2.0)
            .unwrap();
        assert!(e2 > e);
    }

    #[test]
    fn remove_vertex_requires_isolation() {
        let mut m = chain(2);
        assert!(matches!(
            m.remove_vertex(VertexId(1)),
            Err(Error::VertexNotIsolated(_))
        ));
        let e = m.incident_edges(VertexId(1)).next().unwrap().id;
        m.remove_edge(e).unwrap();
        m.remove_vertex(VertexId(1)).unwrap();
        assert!(matches!(
            m.remove_vertex(VertexId(1)),
            Err(Error::UnknownVertex(_))
        ));
        assert!(m.adjacency_consistent());
    }

    #[test]
    fn edge_errors() {
        let mut m = chain(2);
        assert!(matches!(
            m.add_edge(VertexId(0), VertexId(0), unit(), EdgeKind::Sequential, 0.0),
            Err(Error::SelfLoop(_))
        ));
        assert!(matches!(
            m.add_edge(VertexId(0), VertexId(9), unit(), EdgeKind::Sequential, 0.0),
            Err(Error::UnknownVertex(VertexId(9)))
        ));
        assert!(matches!(
            m.add_edge(VertexId(0), VertexId(1), unit(), EdgeKind::Sequential, 0.0),
            Err(Error::DuplicateSequential { .. })
        ));
        // a loop closure may parallel a sequential edge
        m.add_edge(VertexId(0), VertexId(1), unit(), EdgeKind::LoopClosure, 0.0)
            .unwrap();
        assert!(matches!(
            m.remove_edge(EdgeId(77)),
            Err(Error::UnknownEdge(_))
        ));
    }

    #[test]
    fn vertex_errors() {
        let mut m = chain(2);
        let dup = Vertex {
            id: VertexId(1),
            pose: Pose2::ORIGIN,
            stamp: 5.0,
        };
        assert!(matches!(
            m.insert_vertex(dup),
            Err(Error::DuplicateVertex(_))
        ));
        assert!(matches!(
            m.add_vertex(Pose2::ORIGIN, 0.5),
            Err(Error::NonMonotoneStamp { .. })
        ));
        let id = m.add_vertex(Pose2::ORIGIN, 1.0).unwrap();
        assert_eq!(id, VertexId(2));
    }

    #[test]
    fn reroute_keeps_id_and_index() {
        let mut m = chain(3);
        let e = m.edge_between(VertexId(1), VertexId(2)).unwrap();
        m.reroute_edge(e, VertexId(0), VertexId(2), unit()).unwrap();
        assert_eq!(m.edge(e).unwrap().from, VertexId(0));
        assert_eq!(m.degree(VertexId(1)), 1);
        assert!(m.adjacency_consistent());
        assert!(m.is_connected());
    }

    #[test]
    fn connectivity_detects_split() {
        let mut m = chain(3);
        let e = m.edge_between(VertexId(1), VertexId(2)).unwrap();
        m.remove_edge(e).unwrap();
        assert!(!m.is_connected());
        assert!(!m.check_invariants());
    }

    #[test]
    fn edge_direction_helpers() {
        let m = chain(2);
        let e = m
            .edge(m.edge_between(VertexId(0), VertexId(1)).unwrap())
            .unwrap();
        assert_eq!(e.other(VertexId(0)), VertexId(1));
        let back = e.constraint_from(VertexId(1));
        assert!((back.d() - 1.0).abs() < 1e-12);
        assert!((back.heading().abs() - std::f64::consts::PI).abs() < 1e-12);
    }
}
