//! Text formats: event streams, graph snapshots and metrics CSV.
//!
//! ```text
//! ODOM <stamp> <d> <heading> <facing>
//! LOOP <stamp> <target_pose_index> <d> <heading> <facing>
//!
//! VERTEX2 <id> <x> <y> <theta>
//! EDGE2 <from> <to> <d> <heading> <facing> <seq|loop>
//! ```
//!
//! Fields are whitespace separated and `#` starts a comment. Floats are
//! written with 17 significant digits so every value reads back bit for bit.
//! Graph files carry neither stamps nor edge ids: reading assigns edge ids
//! in file order and stamps of zero.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, RelativeConstraint};
use crate::map::{CognitiveMap, EdgeKind, Vertex, VertexId};
use crate::simulator::{Payload, SimEvent};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits text into `(line number, tokens with 1-based columns)`, skipping
/// blank and comment-only lines.
fn records(bytes: &[u8]) -> impl Iterator<Item = Result<(usize, Vec<(usize, &str)>)>> {
    bytes
        .split(|b| *b == b'\n')
        .enumerate()
        .filter_map(|(k, raw)| {
            let line = k + 1;
            let text = match std::str::from_utf8(raw) {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(Error::Syntax {
                        line,
                        column: e.valid_up_to() + 1,
                        message: "invalid UTF-8".into(),
                    }))
                }
            };
            let body = text.split('#').next().unwrap_or("");
            let tokens: Vec<(usize, &str)> = body
                .split_ascii_whitespace()
                .map(|t| (t.as_ptr() as usize - text.as_ptr() as usize + 1, t))
                .collect();
            (!tokens.is_empty()).then_some(Ok((line, tokens)))
        })
}

struct Fields<'a> {
    line: usize,
    tokens: Vec<(usize, &'a str)>,
    next: usize,
}

impl<'a> Fields<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self.tokens.get(self.next).copied().ok_or_else(|| {
            let end = self.tokens.last().map_or(1, |(c, s)| c + s.len());
            self.err(end, format!("missing {what}"))
        })?;
        self.next += 1;
        Ok(t)
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let (col, s) = self.token(what)?;
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            Ok(_) => Err(self.err(col, format!("{what} must be finite"))),
            Err(_) => Err(self.err(col, format!("expected a number for {what}, got {s:?}"))),
        }
    }

    fn uint(&mut self, what: &str) -> Result<u64> {
        let (col, s) = self.token(what)?;
        s.parse::<u64>().map_err(|_| {
            self.err(
                col,
                format!("expected a non-negative integer for {what}, got {s:?}"),
            )
        })
    }

    fn constraint(&mut self) -> Result<RelativeConstraint> {
        let d = self.float("d")?;
        let heading = self.float("heading")?;
        let facing = self.float("facing")?;
        Ok(RelativeConstraint::new(d, heading, facing))
    }

    fn finish(&self) -> Result<()> {
        match self.tokens.get(self.next) {
            Some((col, s)) => Err(self.err(*col, format!("unexpected trailing field {s:?}"))),
            None => Ok(()),
        }
    }
}

fn fields(record: Result<(usize, Vec<(usize, &str)>)>) -> Result<(Fields<'_>, &str)> {
    let (line, tokens) = record?;
    let tag = tokens[0].1;
    Ok((
        Fields {
            line,
            tokens,
            next: 1,
        },
        tag,
    ))
}

pub fn parse_events_bytes(bytes: &[u8]) -> Result<Vec<SimEvent>> {
    let mut out: Vec<SimEvent> = Vec::new();
    for record in records(bytes) {
        let (mut f, tag) = fields(record)?;
        if tag != "ODOM" && tag != "LOOP" {
            return Err(f.err(f.tokens[0].0, format!("unknown record {tag:?}")));
        }
        let stamp = f.float("stamp")?;
        let payload = if tag == "ODOM" {
            Payload::Odom(f.constraint()?)
        } else {
            let target = f.uint("target")?;
            let target =
                usize::try_from(target).map_err(|_| f.err(f.tokens[2].0, "target out of range"))?;
            Payload::Loop(target, f.constraint()?)
        };
        f.finish()?;
        if let Some(prev) = out.last() {
            if stamp < prev.stamp {
                return Err(Error::StampRegression {
                    line: f.line,
                    prev: prev.stamp,
                    got: stamp,
                });
            }
        }
        out.push(SimEvent { stamp, payload });
    }
    Ok(out)
}

pub fn parse_events_str(text: &str) -> Result<Vec<SimEvent>> {
    parse_events_bytes(text.as_bytes())
}

pub fn parse_events(path: impl AsRef<Path>) -> Result<Vec<SimEvent>> {
    parse_events_bytes(&read(path.as_ref())?)
}

pub fn format_events(events: &[SimEvent]) -> String {
    let mut s = String::new();
    for e in events {
        let (tag, target, c) = match e.payload {
            Payload::Odom(c) => ("ODOM", None, c),
            Payload::Loop(j, c) => ("LOOP", Some(j), c),
        };
        let _ = write!(s, "{tag} {}", num(e.stamp));
        if let Some(j) = target {
            let _ = write!(s, " {j}");
        }
        let _ = writeln!(
            s,
            " {} {} {}",
            num(c.d()),
            num(c.heading()),
            num(c.facing())
        );
    }
    s
}

pub fn write_events(events: &[SimEvent], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_events(events))
}

pub fn format_graph(map: &CognitiveMap) -> String {
    let mut s = String::new();
    for v in map.vertices() {
        let p = v.pose;
        let _ = writeln!(
            s,
            "VERTEX2 {} {} {} {}",
            v.id,
            num(p.x()),
            num(p.y()),
            num(p.theta())
        );
    }
    for e in map.edges() {
        let c = e.constraint;
        let kind = match e.kind {
            EdgeKind::Sequential => "seq",
            EdgeKind::LoopClosure => "loop",
        };
        let _ = writeln!(
            s,
            "EDGE2 {} {} {} {} {} {kind}",
            e.from,
            e.to,
            num(c.d()),
            num(c.heading()),
            num(c.facing())
        );
    }
    s
}

pub fn parse_graph_bytes(bytes: &[u8]) -> Result<CognitiveMap> {
    let mut map = CognitiveMap::new();
    for record in records(bytes) {
        let (mut f, tag) = fields(record)?;
        match tag {
            "VERTEX2" => {
                let id = VertexId(f.uint("vertex id")?);
                let (x, y, theta) = (f.float("x")?, f.float("y")?, f.float("theta")?);
                f.finish()?;
                map.insert_vertex(Vertex {
                    id,
                    pose: Pose2::new(x, y, theta),
                    stamp: 0.0,
                })
                .map_err(|e| f.err(f.tokens[1].0, e.to_string()))?;
            }
            "EDGE2" => {
                let from = VertexId(f.uint("from")?);
                let to = VertexId(f.uint("to")?);
                let c = f.constraint()?;
                let (col, kind) = f.token("kind")?;
                let kind = match kind {
                    "seq" => EdgeKind::Sequential,
                    "loop" => EdgeKind::LoopClosure,
                    other => return Err(f.err(col, format!("unknown edge kind {other:?}"))),
                };
                f.finish()?;
                for v in [from, to] {
                    if !map.contains_vertex(v) {
                        return Err(Error::DanglingReference {
                            line: f.line,
                            vertex: v,
                        });
                    }
                }
                map.add_edge(from, to, c, kind, 0.0)
                    .map_err(|e| f.err(f.tokens[1].0, e.to_string()))?;
            }
            other => return Err(f.err(f.tokens[0].0, format!("unknown record {other:?}"))),
        }
    }
    Ok(map)
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<CognitiveMap> {
    parse_graph_bytes(&read(path.as_ref())?)
}

pub fn write_graph(map: &CognitiveMap, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_graph(map))
}

/// Same vertex ids, poses, and edges in id order with equal endpoints,
/// kinds and constraints (within `tol`). Stamps and edge ids are ignored.
pub fn same_structure(a: &CognitiveMap, b: &CognitiveMap, tol: f64) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    let close_c = |p: &RelativeConstraint, q: &RelativeConstraint| {
        close(p.d(), q.d()) && close(p.heading(), q.heading()) && close(p.facing(), q.facing())
    };
    a.vertex_count() == b.vertex_count()
        && a.edge_count() == b.edge_count()
        && a.vertices().zip(b.vertices()).all(|(u, v)| {
            u.id == v.id
                && close(u.pose.x(), v.pose.x())
                && close(u.pose.y(), v.pose.y())
                && close(u.pose.theta(), v.pose.theta())
        })
        && a.edges().zip(b.edges()).all(|(e, f)| {
            e.from == f.from
                && e.to == f.to
                && e.kind == f.kind
                && close_c(&e.constraint, &f.constraint)
        })
}

/// Map size and solver state right after one ingested event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub stamp: f64,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub optimize_calls: usize,
    /// Cost reached by the most recent optimization; 0 before the first.
    pub final_cost: f64,
}

pub fn format_metrics(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record([
        "stamp",
        "vertex_count",
        "edge_count",
        "optimize_calls",
        "final_cost",
    ])
    .and_then(|_| records.iter().try_for_each(|r| w.serialize(r)))
    .map_err(|e| Error::Syntax {
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<metrics>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writes UTF-8"))
}

pub fn write_metrics(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_metrics(records)?)
}

pub fn parse_metrics_bytes(bytes: &[u8]) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::Syntax {
                    line,
                    column: 0,
                    message: e.to_string(),
                }
            })
        })
        .collect()
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    parse_metrics_bytes(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_examples() {
        assert!(parse_events_str("").unwrap().is_empty());
        let one = parse_events_str("ODOM 0.0 1.0 0.0 0.0\n").unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(one[0].payload, Payload::Odom(c) if c.d() == 1.0));
        let err = parse_events_str("ODOM 2.0 1 0 0\nODOM 1.0 1 0 0\n").unwrap_err();
        assert!(
            matches!(err, Error::StampRegression { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn comments_and_loops() {
        let text = "# header\n\nODOM 0.2 0.05 0 0 # step\nLOOP 0.3 0 0.05 3.1 0\n";
        let ev = parse_events_str(text).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(matches!(ev[1].payload, Payload::Loop(0, _)));
        assert_eq!(parse_events_str(&format_events(&ev)).unwrap(), ev);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let cases = [
            ("ODOM 0 1 x 0", 1, 10),
            ("\nSTEP 0 1 0 0", 2, 1),
            ("ODOM 0 1 0", 1, 11),
            ("LOOP 0 -1 1 0 0", 1, 8),
            ("ODOM 0 1 0 0 7", 1, 14),
            ("ODOM 0 inf 0 0", 1, 8),
        ];
        for (text, line, column) in cases {
            match parse_events_str(text) {
                Err(Error::Syntax {
                    line: l, column: c, ..
                }) => assert_eq!((l, c), (line, column), "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_events_bytes(b"ODOM \xff"),
            Err(Error::Syntax {
                line: 1,
                column: 6,
                ..
            })
        ));
    }

    fn chain() -> CognitiveMap {
        let mut m = CognitiveMap::with_origin(Pose2::ORIGIN, 0.0);
        let mut prev = VertexId(0);
        for k in 1..3 {
            let c = RelativeConstraint::new(0.3, 0.1 * k as f64, -0.2);
            let p = m.pose(prev).unwrap().predict(&c);
            let v = m.add_vertex(p, k as f64).unwrap();
            m.add_edge(prev, v, c, EdgeKind::Sequential, k as f64)
                .unwrap();
            prev = v;
        }
        m
    }

    #[test]
    fn graph_examples() {
        assert_eq!(format_graph(&CognitiveMap::new()), "");
        assert!(parse_graph_bytes(b"").unwrap().is_empty());
        let m = chain();
        assert!(same_structure(
            &parse_graph_bytes(format_graph(&m).as_bytes()).unwrap(),
            &m,
            0.0
        ));
        let dangling = "VERTEX2 0 0 0 0\nEDGE2 0 5 1 0 0 seq\n";
        assert!(matches!(
            parse_graph_bytes(dangling.as_bytes()),
            Err(Error::DanglingReference {
                line: 2,
                vertex: VertexId(5)
            })
        ));
        assert!(parse_graph_bytes(b"VERTEX2 0 0 0 0\nVERTEX2 0 1 0 0\n").is_err());
        assert!(
            parse_graph_bytes(b"VERTEX2 0 0 0 0\nVERTEX2 1 1 0 0\nEDGE2 0 1 1 0 0 odd\n").is_err()
        );
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = chain();
        let p = dir.path().join("map.graph");
        write_graph(&m, &p).unwrap();
        assert!(same_structure(&read_graph(&p).unwrap(), &m, 0.0));
        assert!(matches!(
            read_graph(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn metrics_examples() {
        assert_eq!(
            format_metrics(&[]).unwrap(),
            "stamp,vertex_count,edge_count,optimize_calls,final_cost\n"
        );
        let r = MetricsRecord {
            stamp: 0.0,
            vertex_count: 1,
            edge_count: 0,
            optimize_calls: 0,
            final_cost: 0.0,
        };
        let text = format_metrics(&[r]).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_metrics_bytes(text.as_bytes()).unwrap(), vec![r]);
        assert!(parse_metrics_bytes(
            b"stamp,vertex_count,edge_count,optimize_calls,final_cost\n0,-1,0,0,0\n"
        )
        .is_err());
    }
}
