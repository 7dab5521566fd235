//! Synthetic datasets: a closed route driven for several laps, noisy
//! odometry and proximity loop closures.
//!
//! The route is sampled at a fixed number of stations per lap, evenly spaced
//! in arc length, and every lap visits the same stations. Ground truth is
//! expressed in the frame of the first station, so pose 0 is the origin.
//! Noise is drawn from `ChaCha8Rng` through the Box–Muller transform, two
//! uniforms per normal sample, and only perturbs the measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, RelativeConstraint};

/// Zero-mean Gaussian noise on `d` and on `facing`, per measurement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_d: f64,
    pub sigma_theta: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        sigma_d: 0.0,
        sigma_theta: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Closed route through these points, meters; the last joins the first.
    pub route: Vec<(f64, f64)>,
    pub speed: f64,
    pub step_dt: f64,
    pub odom_noise: NoiseModel,
    pub loop_noise: NoiseModel,
    pub loop_detect_radius: f64,
    pub loop_heading_tolerance: f64,
    pub laps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            route: preset("square").expect("built in"),
            speed: 0.25,
            step_dt: 0.2,
            odom_noise: NoiseModel {
                sigma_d: 0.002,
                sigma_theta: 0.002,
            },
            loop_noise: NoiseModel::NONE,
            loop_detect_radius: 0.01,
            loop_heading_tolerance: 0.5,
            laps: 3,
        }
    }
}

pub const PRESETS: [&str; 3] = ["square", "figure-eight", "irat-maze-like"];

/// Waypoints of a named route.
pub fn preset(name: &str) -> Option<Vec<(f64, f64)>> {
    match name {
        "square" => Some(vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]),
        "figure-eight" => {
            // lemniscate of Gerono, ~8 m around
            let (a, n) = (1.3, 96);
            Some(
                (0..n)
                    .map(|k| {
                        let t = std::f64::consts::TAU * k as f64 / n as f64;
                        (a * t.sin(), a * t.sin() * t.cos())
                    })
                    .collect(),
            )
        }
        // corridors with a four-way junction at (2, 1) crossed twice per lap
        "irat-maze-like" => Some(vec![
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 2.0),
            (0.0, 2.0),
            (0.0, 1.0),
            (3.0, 1.0),
            (3.0, -1.0),
            (0.0, -1.0),
        ]),
        _ => None,
    }
}

impl SimConfig {
    pub fn from_preset(name: &str, seed: u64, laps: usize) -> Result<Self> {
        let route = preset(name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown preset {name:?}, expected one of {PRESETS:?}"
            ))
        })?;
        Ok(SimConfig {
            seed,
            route,
            laps,
            ..Default::default()
        })
    }

    pub fn noiseless(mut self) -> Self {
        self.odom_noise = NoiseModel::NONE;
        self.loop_noise = NoiseModel::NONE;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.odom_noise.sigma_d,
            self.odom_noise.sigma_theta,
            self.loop_noise.sigma_d,
            self.loop_noise.sigma_theta,
        ];
        let ok = sigmas.iter().all(|s| *s >= 0.0 && s.is_finite())
            && self.loop_detect_radius > 0.0
            && self.loop_heading_tolerance >= 0.0
            && self.speed > 0.0
            && self.step_dt > 0.0
            && self.speed.is_finite()
            && self.step_dt.is_finite()
            && self.laps >= 1
            && self
                .route
                .iter()
                .all(|(x, y)| x.is_finite() && y.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid simulator config {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Odom(RelativeConstraint),
    /// Index of the matched earlier ground-truth pose, and the pose of that
    /// earlier pose seen from the current one.
    Loop(usize, RelativeConstraint),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub stamp: f64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub events: Vec<SimEvent>,
    /// Pose `k` is where the robot stands after the `k`-th odometry event.
    pub ground_truth: Vec<Pose2>,
    pub stations_per_lap: usize,
}

/// Station poses of one lap in the frame of the first station.
pub fn stations(route: &[(f64, f64)], spacing: f64) -> Result<Vec<Pose2>> {
    if route.len() < 2 {
        return Err(Error::DegenerateRoute);
    }
    let segs: Vec<((f64, f64), f64, f64)> = (0..route.len())
        .map(|k| {
            let (a, b) = (route[k], route[(k + 1) % route.len()]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            (a, dx.hypot(dy), dy.atan2(dx))
        })
        .filter(|s| s.1 > 0.0)
        .collect();
    let length: f64 = segs.iter().map(|s| s.1).sum();
    if segs.len() < 2 || !length.is_finite() {
        return Err(Error::DegenerateRoute);
    }
    let n = (length / spacing).round().max(3.0) as usize;

    let mut out = Vec::with_capacity(n);
    let (mut seg, mut seg_start) = (0, 0.0);
    for k in 0..n {
        let s = length * k as f64 / n as f64;
        while seg + 1 < segs.len() && s >= seg_start + segs[seg].1 {
            seg_start += segs[seg].1;
            seg += 1;
        }
        let ((x0, y0), _, dir) = segs[seg];
        let t = s - seg_start;
        out.push(Pose2::new(x0 + t * dir.cos(), y0 + t * dir.sin(), dir));
    }
    let start = out[0];
    Ok(out
        .iter()
        .map(|p| start.between(p))
        .map(|c| Pose2::ORIGIN.predict(&c))
        .collect())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - u keeps the log argument in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn noisy(c: RelativeConstraint, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> RelativeConstraint {
    let (nd, nf) = (normal(rng), normal(rng));
    if noise.sigma_d == 0.0 && noise.sigma_theta == 0.0 {
        return c;
    }
    RelativeConstraint::new(
        c.d() + noise.sigma_d * nd,
        c.heading(),
        c.facing() + noise.sigma_theta * nf,
    )
}

pub fn generate(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let lap = stations(&cfg.route, cfg.speed * cfg.step_dt)?;
    let n = lap.len();
    let total = n * cfg.laps;
    let ground_truth: Vec<Pose2> = (0..=total).map(|k| lap[k % n]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut events = Vec::with_capacity(2 * total);
    for k in 1..=total {
        let stamp = k as f64 * cfg.step_dt;
        let step = ground_truth[k - 1].between(&ground_truth[k]);
        events.push(SimEvent {
            stamp,
            payload: Payload::Odom(noisy(step, &cfg.odom_noise, &mut rng)),
        });

        let here = ground_truth[k];
        let mut best: Option<(usize, f64)> = None;
        for (j, there) in ground_truth.iter().enumerate().take((k / n) * n) {
            let dist = here.distance(there);
            let turn = wrap_angle(here.theta() - there.theta()).abs();
            if dist <= cfg.loop_detect_radius
                && turn <= cfg.loop_heading_tolerance
                && best.is_none_or(|(_, b)| dist < b)
            {
                best = Some((j, dist));
            }
        }
        if let Some((j, _)) = best {
            let c = here.between(&ground_truth[j]);
            events.push(SimEvent {
                stamp: stamp + 0.5 * cfg.step_dt,
                payload: Payload::Loop(j, noisy(c, &cfg.loop_noise, &mut rng)),
            });
        }
    }
    Ok(Simulation {
        events,
        ground_truth,
        stations_per_lap: n,
    })
}

/// Folds odometry from the origin; one pose per odometry event plus the
/// origin.
pub fn dead_reckon(events: &[SimEvent]) -> Vec<Pose2> {
    let mut out = vec![Pose2::ORIGIN];
    for e in events {
        if let Payload::Odom(c) = e.payload {
            out.push(out.last().expect("non-empty").predict(&c));
        }
    }
    out
}
