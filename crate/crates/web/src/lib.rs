//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! and are plain Rust, so they run under native tests too.

use compact_cogmap::pipeline::{run_events, Mode, PipelineConfig};
use compact_cogmap::simulator::{generate, SimConfig};
use compact_cogmap::sparsifier::{neighborhood_field, NeighborhoodConfig};
use compact_cogmap::EdgeKind;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_LAPS: usize = 20;

#[derive(Debug, Serialize)]
pub struct GateReading {
    pub g: f64,
    pub kept: bool,
}

/// Field value for a pending motion and whether the gate keeps it.
pub fn gate_json(d: f64, theta: f64, alpha: f64, beta: f64, delta: f64) -> Result<String, String> {
    let cfg = NeighborhoodConfig {
        alpha,
        beta,
        delta_threshold: delta,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    if !(d.is_finite() && theta.is_finite()) || d < 0.0 {
        return Err(format!("bad motion d={d} theta={theta}"));
    }
    let g = neighborhood_field(d, theta.abs(), &cfg);
    to_json(&GateReading { g, kept: g > delta })
}

#[derive(Debug, Serialize)]
struct DemoVertex {
    id: u64,
    x: f64,
    y: f64,
    heading: f64,
}

#[derive(Debug, Serialize)]
struct DemoEdge {
    from: u64,
    to: u64,
    kind: &'static str,
}

#[derive(Debug, Serialize)]
struct Demo {
    mode: &'static str,
    vertices: Vec<DemoVertex>,
    edges: Vec<DemoEdge>,
    truth: Vec<[f64; 2]>,
    metrics: Vec<compact_cogmap::io::MetricsRecord>,
    totals: compact_cogmap::pipeline::Totals,
}

fn sim_config(preset: &str, laps: usize, seed: u64, noiseless: bool) -> Result<SimConfig, String> {
    if laps == 0 || laps > MAX_LAPS {
        return Err(format!("laps must be in 1..={MAX_LAPS}"));
    }
    let cfg = SimConfig::from_preset(preset, seed, laps).map_err(|e| e.to_string())?;
    Ok(if noiseless { cfg.noiseless() } else { cfg })
}

fn demo(mode: Mode, sim: &SimConfig) -> Result<Demo, String> {
    let s = generate(sim).map_err(|e| e.to_string())?;
    let out = run_events(&PipelineConfig::for_mode(mode), &s.events).map_err(|e| e.to_string())?;
    Ok(Demo {
        mode: mode.name(),
        vertices: out
            .map
            .vertices()
            .map(|v| DemoVertex {
                id: v.id.0,
                x: v.pose.x(),
                y: v.pose.y(),
                heading: v.pose.theta(),
            })
            .collect(),
        edges: out
            .map
            .edges()
            .map(|e| DemoEdge {
                from: e.from.0,
                to: e.to.0,
                kind: match e.kind {
                    EdgeKind::Sequential => "seq",
                    EdgeKind::LoopClosure => "loop",
                },
            })
            .collect(),
        truth: s.ground_truth.iter().map(|p| [p.x(), p.y()]).collect(),
        metrics: out.metrics,
        totals: out.totals,
    })
}

/// Simulate `preset` for `laps` laps and run one mapping mode over it.
pub fn run_demo_json(
    preset: &str,
    mode: &str,
    laps: usize,
    seed: u64,
    noiseless: bool,
) -> Result<String, String> {
    let mode: Mode = mode
        .parse()
        .map_err(|e: compact_cogmap::Error| e.to_string())?;
    to_json(&demo(mode, &sim_config(preset, laps, seed, noiseless)?)?)
}

#[derive(Debug, Serialize)]
struct Curve {
    mode: &'static str,
    stamps: Vec<f64>,
    vertices: Vec<usize>,
    edges: Vec<usize>,
}

/// Vertex and edge counts over time for all three modes on one stream.
pub fn growth_curves_json(
    preset: &str,
    laps: usize,
    seed: u64,
    noiseless: bool,
) -> Result<String, String> {
    let sim = sim_config(preset, laps, seed, noiseless)?;
    let s = generate(&sim).map_err(|e| e.to_string())?;
    let curves = [Mode::Standard, Mode::IntegrationOnly, Mode::CompactFull]
        .into_iter()
        .map(|mode| {
            let out = run_events(&PipelineConfig::for_mode(mode), &s.events)
                .map_err(|e| e.to_string())?;
            Ok(Curve {
                mode: mode.name(),
                stamps: out.metrics.iter().map(|m| m.stamp).collect(),
                vertices: out.metrics.iter().map(|m| m.vertex_count).collect(),
                edges: out.metrics.iter().map(|m| m.edge_count).collect(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&curves)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn gate(d: f64, theta: f64, alpha: f64, beta: f64, delta: f64) -> Result<String, JsError> {
    gate_json(d, theta, alpha, beta, delta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn run_demo(
    preset: &str,
    mode: &str,
    laps: u32,
    seed: u32,
    noiseless: bool,
) -> Result<String, JsError> {
    run_demo_json(preset, mode, laps as usize, seed as u64, noiseless).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn growth_curves(
    preset: &str,
    laps: u32,
    seed: u32,
    noiseless: bool,
) -> Result<String, JsError> {
    growth_curves_json(preset, laps as usize, seed as u64, noiseless).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn presets() -> String {
    serde_json::to_string(&compact_cogmap::simulator::PRESETS).unwrap_or_default()
}
