//! Per-run summary numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::executor::{Outcome, Plant, RunConfig, RunResult, Sample};

/// How a run was discretized. None of this is prescribed by the control law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub integrator: String,
    pub dt: f64,
    /// Jump-set crossings and surface touchdowns are bisected inside a step.
    pub event_location: bool,
    /// Sliding steps are projected back onto the obstacle surface.
    pub surface_projection: bool,
    /// Unicycle inputs are held constant over a step.
    pub zero_order_hold: bool,
}

impl Discretization {
    pub fn of(cfg: &RunConfig) -> Self {
        let unicycle = matches!(cfg.plant, Plant::Unicycle { .. });
        Self {
            integrator: "rk4".into(),
            dt: cfg.dt,
            event_location: true,
            surface_projection: !unicycle,
            zero_order_hold: unicycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub outcome: Outcome,
    pub path_length: f64,
    /// Smallest clearance to the true obstacles; absent without obstacles.
    pub min_clearance: Option<f64>,
    pub switches: usize,
    /// Activations keyed by obstacle index (track id in sensor mode).
    pub activations: BTreeMap<usize, usize>,
    /// Largest control change across a recorded jump.
    pub max_jump_control_step: f64,
    /// Largest control change between consecutive samples of one flow.
    pub max_flow_control_step: f64,
    pub max_control: f64,
    pub samples: usize,
    pub final_time: f64,
    pub perception_rejects: usize,
    pub discretization: Discretization,
    /// Seconds of wall time; only filled on request since it breaks
    /// reproducibility of the output files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl Metrics {
    pub fn from_run(res: &RunResult, cfg: &RunConfig) -> Self {
        let traj = &res.trajectory;
        let min_clearance = traj
            .samples
            .iter()
            .map(|s| s.clearance)
            .fold(f64::INFINITY, f64::min);
        let mut activations = BTreeMap::new();
        for a in &traj.activations {
            *activations.entry(a.k).or_insert(0) += 1;
        }
        let max_jump_control_step = traj
            .switches
            .iter()
            .map(|s| (&s.u_after - &s.u_before).norm())
            .fold(0.0, f64::max);
        Self {
            outcome: res.outcome.clone(),
            path_length: path_length(&traj.samples),
            min_clearance: min_clearance.is_finite().then_some(min_clearance),
            switches: traj.switches.len(),
            activations,
            max_jump_control_step,
            max_flow_control_step: max_flow_control_step(&traj.samples),
            max_control: traj.samples.iter().map(|s| s.u.norm()).fold(0.0, f64::max),
            samples: traj.samples.len(),
            final_time: traj.samples.last().map_or(0.0, |s| s.t),
            perception_rejects: traj.perception_rejects,
            discretization: Discretization::of(cfg),
            wall_time: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Sum of distances between consecutive samples.
pub fn path_length(samples: &[Sample]) -> f64 {
    samples.windows(2).map(|w| (&w[1].x - &w[0].x).norm()).sum()
}

/// Largest control change between consecutive samples with the same jump
/// counter.
pub fn max_flow_control_step(samples: &[Sample]) -> f64 {
    samples
        .windows(2)
        .filter(|w| w[0].j == w[1].j)
        .map(|w| (&w[1].u - &w[0].u).norm())
        .fold(0.0, f64::max)
}

/// Relative length difference in percent, `100 (a - b) / b`.
pub fn rld(a: f64, b: f64) -> f64 {
    100.0 * (a - b) / b
}
