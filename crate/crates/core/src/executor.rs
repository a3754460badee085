//! Hybrid-system runner: fixed-step RK4 flows, jump resolution with flow
//! priority, hybrid time bookkeeping and trajectory recording.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    initial_obstacle, ControlError, Controller, ControllerConfig, Mode, ModeMap,
    VirtualDestinations,
};
use crate::diffdrive::{adapt, unicycle_step, DriveParams, UnicycleState};
use crate::geometry::{VecN, TAU_CONE};
use crate::sensor::{
    apply_margin_and_range, perceive, scan_2d, scan_3d, segment_returns, segment_returns_3d,
    ScanConfig2D, ScanConfig3D, SensorError, Tracker,
};
use crate::world::{Params, Workspace, WorldError};

/// Bisection rounds used to locate a jump-set crossing inside a step.
const LOCATE_ITERS: usize = 60;
/// Slack tolerance for leaving an avoidance flow set. A surface-following
/// maneuver touches the lateral cone tangentially at the exit point, where
/// rounding makes the cone slack flicker around zero over a √ε-wide stretch;
/// the tolerance keeps that touch from firing before the actual exit.
const EXIT_TOL: f64 = 1e-12;
/// Clearance below which a step starts on the surface. Such steps slide and
/// are projected back instead of having their touchdown located.
const SURFACE_TOL: f64 = 1e-9;

/// Consecutive located steps that leave the state unchanged before the run
/// is reported as stalled.
const MAX_STALLED_STEPS: usize = 1000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

/// Which of flow and jump wins on the overlap of the two sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Priority {
    #[default]
    Flow,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Plant {
    SingleIntegrator,
    /// Differential drive tracking the velocity command, 2D only.
    Unicycle {
        #[serde(flatten)]
        drive: DriveParams,
        /// Initial heading in radians.
        heading: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scanner {
    Planar(ScanConfig2D),
    Spherical(ScanConfig3D),
}

impl Scanner {
    pub fn range(&self) -> f64 {
        match self {
            Scanner::Planar(c) => c.range,
            Scanner::Spherical(c) => c.range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSetup {
    pub scanner: Scanner,
    /// Safety margin added to every reconstructed radius.
    pub margin: f64,
    /// Scan every this many integration steps.
    pub scan_period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sensing {
    #[default]
    KnownMap,
    Sensor(SensorSetup),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Stop radius around the target.
    pub e_c: f64,
    /// Consecutive jumps allowed without flowing; `None` uses `2b + 2`.
    pub jump_budget: Option<usize>,
    pub priority: Priority,
    pub controller: ControllerConfig,
    pub plant: Plant,
    pub sensing: Sensing,
    /// Parameters used to derive the perceived workspace in sensor mode.
    pub params: Params,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 60.0,
            e_c: 1e-2,
            jump_budget: None,
            priority: Priority::Flow,
            controller: ControllerConfig::default(),
            plant: Plant::SingleIntegrator,
            sensing: Sensing::KnownMap,
            params: Params::default(),
        }
    }
}

impl RunConfig {
    pub fn budget(&self, obstacles: usize) -> usize {
        self.jump_budget.unwrap_or(2 * obstacles + 2)
    }

    pub fn validate(&self, ws: &Workspace) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.e_c > 0.0) {
            return bad(format!("e_c = {} must be positive", self.e_c));
        }
        if !(self.t_max >= 0.0) {
            return bad(format!("t_max = {} must be nonnegative", self.t_max));
        }
        let need = 2 * ws.len() + 2;
        if let Some(b) = self.jump_budget {
            if b < need {
                return bad(format!("jump budget {b} is below 2b+2 = {need}"));
            }
        }
        if matches!(self.plant, Plant::Unicycle { .. }) && ws.dim() != 2 {
            return bad("the unicycle plant is planar".into());
        }
        if let Sensing::Sensor(s) = &self.sensing {
            let want = match s.scanner {
                Scanner::Planar(_) => 2,
                Scanner::Spherical(_) => 3,
            };
            if ws.dim() != want {
                return bad(format!("a {want}D scanner cannot run in {}D", ws.dim()));
            }
            if s.scan_period == 0 {
                return bad("scan period must be at least one step".into());
            }
            if !(s.margin >= 0.0) {
                return bad(format!("margin {} must be nonnegative", s.margin));
            }
        }
        Ok(())
    }
}

/// Drive inputs recorded for the unicycle plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSample {
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub j: u64,
    pub x: VecN,
    /// Obstacle index, or track id in sensor mode.
    pub k: usize,
    pub m: Mode,
    pub u: VecN,
    /// Clearance to the true obstacles.
    pub clearance: f64,
    pub drive: Option<DriveSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    /// Jump counter after the switch.
    pub j: u64,
    pub x: VecN,
    pub k_from: usize,
    pub k_to: usize,
    pub m_from: Mode,
    pub m_to: Mode,
    pub u_before: VecN,
    pub u_after: VecN,
}

/// An avoidance activation together with the virtual destinations chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub t: f64,
    pub k: usize,
    pub m: Mode,
    pub vd: VirtualDestinations,
    /// Obstacle center used when the destinations were selected.
    pub center: VecN,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub switches: Vec<SwitchEvent>,
    pub activations: Vec<Activation>,
    /// Sensor cycles whose reconstruction was rejected.
    pub perception_rejects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Outcome {
    Converged {
        t: f64,
        j: u64,
    },
    Timeout {
        t: f64,
        j: u64,
    },
    SafetyFault {
        t: f64,
        clearance: f64,
        tolerance: f64,
    },
    ZenoFault {
        t: f64,
        jumps: usize,
        detail: String,
    },
}

impl Outcome {
    pub fn converged(&self) -> bool {
        matches!(self, Outcome::Converged { .. })
    }

    pub fn is_fault(&self) -> bool {
        matches!(
            self,
            Outcome::SafetyFault { .. } | Outcome::ZenoFault { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub outcome: Outcome,
}

/// The workspace the controller sees: the true one, or the one rebuilt from
/// the latest scan.
struct View {
    perceived: Option<Perception>,
}

struct Perception {
    setup: SensorSetup,
    params: Params,
    tracker: Tracker,
    ws: Workspace,
    ids: Vec<usize>,
}

impl Perception {
    fn new(setup: SensorSetup, params: &Params, target: &VecN) -> Result<Self, RunError> {
        let params = Params {
            sensor_range: Some(setup.scanner.range()),
            ..params.clone()
        };
        let ws = Workspace::new(target.clone(), &[], &params)?;
        Ok(Self {
            setup,
            params,
            tracker: Tracker::new(),
            ws,
            ids: Vec::new(),
        })
    }

    /// Scans the true world and rebuilds the perceived workspace. Returns
    /// false when the reconstruction was rejected and the previous
    /// workspace kept.
    fn update(
        &mut self,
        truth: &Workspace,
        x: &VecN,
        keep: Option<usize>,
    ) -> Result<bool, RunError> {
        let arcs = match self.setup.scanner {
            Scanner::Planar(c) => segment_returns(&scan_2d(x, truth, &c)?),
            Scanner::Spherical(c) => segment_returns_3d(&scan_3d(x, truth, &c)?),
        };
        let detected = perceive(&arcs, x);
        let tracks = self.tracker.update(&detected, keep).to_vec();
        let raw: Vec<(VecN, f64)> = tracks
            .iter()
            .map(|t| (t.center.clone(), t.radius))
            .collect();
        let Ok(specs) = apply_margin_and_range(&raw, self.setup.margin) else {
            return Ok(false);
        };
        match Workspace::new(truth.target().clone(), &specs, &self.params) {
            Ok(ws) => {
                self.ws = ws;
                self.ids = tracks.iter().map(|t| t.id).collect();
                Ok(true)
            }
            Err(_) => Ok(false),
        }
    }

    fn index_of(&self, id: usize) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }
}

impl View {
    fn ws<'a>(&'a self, truth: &'a Workspace) -> &'a Workspace {
        match &self.perceived {
            Some(p) => &p.ws,
            None => truth,
        }
    }

    fn index_of(&self, id: usize) -> Option<usize> {
        match &self.perceived {
            Some(p) => p.index_of(id),
            None => Some(id),
        }
    }

    fn id_of(&self, index: usize) -> usize {
        match &self.perceived {
            Some(p) => p.ids[index],
            None => index,
        }
    }
}

/// Plant state between steps.
#[derive(Debug, Clone)]
struct PlantState {
    x: VecN,
    heading: f64,
}

/// Runs one closed-loop simulation from `x0`.
pub fn run(ws: &Workspace, x0: &VecN, cfg: &RunConfig) -> Result<RunResult, RunError> {
    cfg.validate(ws)?;
    if x0.len() != ws.dim() {
        return Err(RunError::Config(format!(
            "start has dimension {}, workspace {}",
            x0.len(),
            ws.dim()
        )));
    }
    if let Some(k) = (0..ws.len()).find(|&k| ws.distance_to(x0, k) < 0.0) {
        return Err(WorldError::InsideObstacle {
            k,
            distance: (x0 - &ws.obstacles()[k].center).norm(),
            radius: ws.obstacles()[k].radius,
        }
        .into());
    }
    Runner::new(ws, x0, cfg)?.run()
}

struct Runner<'a> {
    truth: &'a Workspace,
    cfg: &'a RunConfig,
    view: View,
    plant: PlantState,
    drive: Option<DriveParams>,
    t: f64,
    j: u64,
    /// Selected obstacle id.
    k: usize,
    m: Mode,
    /// The selected index may be activated again until the first
    /// activation.
    pending: bool,
    vds: HashMap<usize, (VirtualDestinations, VecN)>,
    traj: Trajectory,
    max_u: f64,
    budget: usize,
}

impl<'a> Runner<'a> {
    fn new(truth: &'a Workspace, x0: &VecN, cfg: &'a RunConfig) -> Result<Self, RunError> {
        let (drive, heading) = match cfg.plant {
            Plant::SingleIntegrator => (None, 0.0),
            Plant::Unicycle { drive, heading } => (Some(drive), heading),
        };
        let perceived = match cfg.sensing {
            Sensing::KnownMap => None,
            Sensing::Sensor(s) => Some(Perception::new(s, &cfg.params, truth.target())?),
        };
        let k = match (&perceived, truth.is_empty()) {
            (None, false) => initial_obstacle(truth, x0)?,
            _ => 0,
        };
        Ok(Self {
            truth,
            cfg,
            view: View { perceived },
            plant: PlantState {
                x: x0.clone(),
                heading,
            },
            drive,
            t: 0.0,
            j: 0,
            k,
            m: Mode::Zero,
            pending: true,
            vds: HashMap::new(),
            traj: Trajectory::default(),
            max_u: 0.0,
            budget: cfg.budget(truth.len()),
        })
    }

    fn controller(&self) -> Controller<'_> {
        Controller::new(self.view.ws(self.truth), self.cfg.controller)
    }

    /// Virtual destinations of the selected obstacle, re-indexed into the
    /// current view.
    fn current_vd(&self) -> Option<VirtualDestinations> {
        if !self.m.is_avoidance() {
            return None;
        }
        let idx = self.view.index_of(self.k)?;
        let (vd, _) = self.vds.get(&self.k)?;
        let mut vd = vd.clone();
        vd.k = idx;
        Some(vd)
    }

    fn eligible(&self, idx: usize) -> bool {
        self.cfg.controller.mode_map == ModeMap::Original
            || self.pending
            || self.view.id_of(idx) != self.k
    }

    fn candidates(&self, x: &VecN) -> Vec<usize> {
        let ctrl = self.controller();
        let list = match self.cfg.priority {
            // Flow priority: only strict entry into an open active region.
            Priority::Flow => ctrl.active_candidates(x, true, 0.0),
            Priority::Jump => ctrl.active_candidates(x, false, TAU_CONE),
        };
        list.into_iter().filter(|&i| self.eligible(i)).collect()
    }

    /// Whether the hybrid data mandate a jump at `x` for the current mode.
    fn triggers(&self, x: &VecN, m: Mode, vd: Option<&VirtualDestinations>) -> bool {
        let ctrl = self.controller();
        match (m, vd) {
            (Mode::Zero, _) => !self.candidates(x).is_empty(),
            (_, Some(vd)) => match self.cfg.priority {
                Priority::Flow => !ctrl.flow_slack_ok(x, vd, m, EXIT_TOL),
                Priority::Jump => !ctrl.flow_interior(x, vd, m, TAU_CONE),
            },
            // The selected obstacle vanished from the perceived world.
            (_, None) => true,
        }
    }

    fn control_at(
        &self,
        x: &VecN,
        m: Mode,
        vd: Option<&VirtualDestinations>,
    ) -> Result<VecN, RunError> {
        Ok(self.controller().control(x, m, vd)?)
    }

    fn activate(&mut self, idx: usize, count_jump: bool) -> Result<(), RunError> {
        let x = self.plant.x.clone();
        let u_before = self.control_at(&x, self.m, self.current_vd().as_ref())?;
        let (m, vd) = self.controller().activate(&x, idx)?;
        let center = self.view.ws(self.truth).obstacles()[idx].center.clone();
        let id = self.view.id_of(idx);
        let (k_from, m_from) = (self.k, self.m);
        self.traj.activations.push(Activation {
            t: self.t,
            k: id,
            m,
            vd: vd.clone(),
            center: center.clone(),
        });
        self.vds.insert(id, (vd, center));
        self.k = id;
        self.m = m;
        self.pending = false;
        if count_jump {
            self.j += 1;
            let u_after = self.control_at(&x, self.m, self.current_vd().as_ref())?;
            self.traj.switches.push(SwitchEvent {
                t: self.t,
                j: self.j,
                x,
                k_from,
                k_to: id,
                m_from,
                m_to: m,
                u_before,
                u_after,
            });
        }
        Ok(())
    }

    fn deactivate(&mut self) -> Result<(), RunError> {
        let x = self.plant.x.clone();
        let u_before = self.control_at(&x, self.m, self.current_vd().as_ref())?;
        let m_from = self.m;
        self.m = Mode::Zero;
        self.j += 1;
        let u_after = self.control_at(&x, Mode::Zero, None)?;
        self.traj.switches.push(SwitchEvent {
            t: self.t,
            j: self.j,
            x,
            k_from: self.k,
            k_to: self.k,
            m_from,
            m_to: Mode::Zero,
            u_before,
            u_after,
        });
        Ok(())
    }

    /// Applies jumps until the state may flow. `None` means the budget ran
    /// out.
    fn resolve_jumps(&mut self) -> Result<Option<usize>, RunError> {
        let mut jumps = 0;
        loop {
            let vd = self.current_vd();
            if !self.triggers(&self.plant.x, self.m, vd.as_ref()) {
                return Ok(Some(jumps));
            }
            if jumps >= self.budget {
                return Ok(None);
            }
            jumps += 1;
            if self.m.is_avoidance() {
                self.deactivate()?;
            } else {
                let idx = self.candidates(&self.plant.x)[0];
                self.activate(idx, true)?;
            }
        }
    }

    /// Activation at the initial condition when `x0` already lies in a
    /// closed active region.
    fn initial_selection(&mut self) -> Result<(), RunError> {
        let idx = self
            .controller()
            .active_candidates(&self.plant.x, false, TAU_CONE)
            .first()
            .copied();
        if let Some(idx) = idx {
            self.activate(idx, false)?;
        }
        Ok(())
    }

    /// Advances the plant by `h` with the inputs frozen at the step start
    /// for the unicycle, or with RK4 on the closed loop otherwise.
    fn advance(
        &self,
        from: &PlantState,
        h: f64,
        vd: Option<&VirtualDestinations>,
        inputs: (f64, f64),
    ) -> Result<PlantState, RunError> {
        if self.drive.is_some() {
            let s = unicycle_step(
                &UnicycleState {
                    x: from.x.clone(),
                    heading: from.heading,
                },
                inputs.0,
                inputs.1,
                h,
            );
            return Ok(PlantState {
                x: s.x,
                heading: s.heading,
            });
        }
        let f = |y: &VecN| self.control_at(y, self.m, vd);
        let x = &from.x;
        let k1 = f(x)?;
        let k2 = f(&(x + &k1 * (0.5 * h)))?;
        let k3 = f(&(x + &k2 * (0.5 * h)))?;
        let k4 = f(&(x + &k3 * h))?;
        Ok(PlantState {
            x: x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0),
            heading: from.heading,
        })
    }

    /// While sliding along the avoided obstacle the exact flow stays on its
    /// surface, but RK4 stages taken off the surface see the singular inward
    /// tilt and end the step O(dt²) inside. Such a step is projected radially
    /// back onto the surface; deeper penetrations are left for the safety
    /// check.
    fn project_onto_surface(&self, x: &mut VecN, vd: Option<&VirtualDestinations>, dt: f64) {
        let Some(vd) = vd else { return };
        let o = &self.view.ws(self.truth).obstacles()[vd.k];
        let w = &*x - &o.center;
        let n = w.norm();
        if n < o.radius && o.radius - n <= self.max_u * dt && n > 0.0 {
            *x = &o.center + w * (o.radius / n);
        }
    }

    fn record(&mut self, u: &VecN, drive: Option<DriveSample>) {
        self.traj.samples.push(Sample {
            t: self.t,
            j: self.j,
            x: self.plant.x.clone(),
            k: self.k,
            m: self.m,
            u: u.clone(),
            clearance: self.truth.clearance(&self.plant.x),
            drive,
        });
    }

    fn perceive(&mut self) -> Result<(), RunError> {
        let keep = self.m.is_avoidance().then_some(self.k);
        if let Some(p) = self.view.perceived.as_mut() {
            if !p.update(self.truth, &self.plant.x, keep)? {
                self.traj.perception_rejects += 1;
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunResult, RunError> {
        let dt = self.cfg.dt;
        let target = self.truth.target().clone();
        let mut step: u64 = 0;
        let mut stalled = 0;
        loop {
            if let Some(p) = &self.view.perceived {
                if step % p.setup.scan_period as u64 == 0 {
                    self.perceive()?;
                }
            }
            if step == 0 {
                self.initial_selection()?;
            }
            if (&self.plant.x - &target).norm() <= self.cfg.e_c {
                let u = self.control_at(&self.plant.x, self.m, self.current_vd().as_ref())?;
                self.record(&u, None);
                let outcome = Outcome::Converged {
                    t: self.t,
                    j: self.j,
                };
                return Ok(self.finish(outcome));
            }
            let Some(_) = self.resolve_jumps()? else {
                let u = self.control_at(&self.plant.x, self.m, self.current_vd().as_ref())?;
                self.record(&u, None);
                let outcome = Outcome::ZenoFault {
                    t: self.t,
                    jumps: self.budget + 1,
                    detail: format!(
                        "more than {} consecutive jumps at x = {:?} (k = {}, m = {})",
                        self.budget,
                        self.plant.x.as_slice(),
                        self.k,
                        self.m.value()
                    ),
                };
                return Ok(self.finish(outcome));
            };

            let vd = self.current_vd();
            let u = self.control_at(&self.plant.x, self.m, vd.as_ref())?;
            self.max_u = self.max_u.max(u.norm());
            let (inputs, drive) = match &self.drive {
                Some(p) => {
                    let (v, w) = adapt(&u, self.plant.heading, p);
                    (
                        (v, w),
                        Some(DriveSample {
                            heading: self.plant.heading,
                            v,
                            omega: w,
                        }),
                    )
                }
                None => ((0.0, 0.0), None),
            };
            self.record(&u, drive);
            if self.t >= self.cfg.t_max {
                let outcome = Outcome::Timeout {
                    t: self.t,
                    j: self.j,
                };
                return Ok(self.finish(outcome));
            }

            let start = self.plant.clone();
            // The avoidance field is not Lipschitz on the obstacle surface
            // (θ = asin(r/‖x−c‖) has an infinite slope there), so touchdown is
            // located like a jump instead of being stepped over.
            let sliding = self.drive.is_none() && self.m.is_avoidance();
            let outside = self.view.ws(self.truth).clearance(&start.x) > SURFACE_TOL;
            let event = |x: &VecN| {
                self.triggers(x, self.m, vd.as_ref())
                    || (sliding && outside && self.view.ws(self.truth).clearance(x) < 0.0)
            };
            // Steps that start on the surface slide: each probe is projected
            // back, so exits are located on the surface itself.
            let slide = sliding && !outside;
            let step_to = |h: f64| -> Result<PlantState, RunError> {
                let mut p = self.advance(&start, h, vd.as_ref(), inputs)?;
                if slide {
                    self.project_onto_surface(&mut p.x, vd.as_ref(), dt);
                }
                Ok(p)
            };
            let mut next = step_to(dt)?;
            let mut frac = 1.0;
            if event(&next.x) {
                // Stop the step at the first crossing.
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..LOCATE_ITERS {
                    let mid = 0.5 * (lo + hi);
                    let probe = step_to(mid * dt)?;
                    if event(&probe.x) {
                        hi = mid;
                        next = probe;
                    } else {
                        lo = mid;
                    }
                }
                frac = hi;
            }
            // A located touchdown ends just inside; a step that ends on a
            // jump-set crossing is left alone so the jump still fires.
            if sliding && outside && !self.triggers(&next.x, self.m, vd.as_ref()) {
                self.project_onto_surface(&mut next.x, vd.as_ref(), dt);
            }
            if next.x == start.x && frac < 1.0 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            self.plant = next;
            self.t += frac * dt;
            step += 1;
            if stalled > MAX_STALLED_STEPS {
                let u = self.control_at(&self.plant.x, self.m, vd.as_ref())?;
                self.record(&u, None);
                let outcome = Outcome::ZenoFault {
                    t: self.t,
                    jumps: 0,
                    detail: format!(
                        "integration stalled at x = {:?} (k = {}, m = {})",
                        self.plant.x.as_slice(),
                        self.k,
                        self.m.value()
                    ),
                };
                return Ok(self.finish(outcome));
            }

            let tolerance = self.max_u * dt;
            let clearance = self.truth.clearance(&self.plant.x);
            if clearance < -tolerance {
                let u = self
                    .control_at(&self.plant.x, self.m, vd.as_ref())
                    .unwrap_or_else(|_| VecN::zeros(target.len()));
                self.record(&u, None);
                let outcome = Outcome::SafetyFault {
                    t: self.t,
                    clearance,
                    tolerance,
                };
                return Ok(self.finish(outcome));
            }
        }
    }

    fn finish(self, outcome: Outcome) -> RunResult {
        RunResult {
            trajectory: self.traj,
            outcome,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ModeChoice;
    use crate::geometry::vec_of;
    use crate::world::ObstacleSpec;
    use approx::assert_abs_diff_eq;

    fn single() -> Workspace {
        Workspace::new(
            vec_of(&[0.0, 0.0]),
            &[ObstacleSpec::new(vec_of(&[2.0, 0.0]), 1.0)],
            &Params::default(),
        )
        .unwrap()
    }

    #[test]
    fn clear_line_of_sight_is_straight() {
        let ws = single();
        let x0 = vec_of(&[-3.0, 1.0]);
        let res = run(&ws, &x0, &RunConfig::default()).unwrap();
        assert!(res.outcome.converged());
        assert!(res.trajectory.activations.is_empty());
        assert!(res.trajectory.switches.is_empty());
        let dir = &x0 / x0.norm();
        for s in &res.trajectory.samples {
            let off = &s.x - &dir * dir.dot(&s.x);
            assert!(off.norm() < 1e-12);
        }
    }

    #[test]
    fn surface_exit_does_not_stall() {
        // Slides along obstacle 1 and leaves it exactly on its surface.
        let specs = [
            (
                [-0.18372288938389847, 4.902713384029235],
                1.0332892341800155,
            ),
            ([-1.0452131587827678, -5.348473122257957], 0.898205070340623),
            ([5.791727819502759, 5.184120040643462], 0.6456709303118559),
            ([-3.584363851907429, -2.6630597131246745], 1.169933618148607),
        ]
        .map(|(c, r)| ObstacleSpec::new(vec_of(&c), r));
        let ws = Workspace::new(
            vec_of(&[6.267102524694323, 2.2493354337272287]),
            &specs,
            &Params::default(),
        )
        .unwrap();
        let cfg = RunConfig {
            t_max: 5.0,
            ..RunConfig::default()
        };
        let res = run(
            &ws,
            &vec_of(&[-4.571095940769023, -7.462073549011649]),
            &cfg,
        )
        .unwrap();
        assert!(res.outcome.converged(), "{:?}", res.outcome);
        let exit = res
            .trajectory
            .switches
            .iter()
            .find(|s| s.m_to == Mode::Zero)
            .expect("avoidance ends");
        assert!(ws.clearance(&exit.x).abs() < 1e-12);
        assert!((&exit.u_after - &exit.u_before).norm() < 1e-8);
    }

    #[test]
    fn start_at_target_converges_immediately() {
        let ws = single();
        let res = run(&ws, &vec_of(&[0.0, 0.0]), &RunConfig::default()).unwrap();
        assert_eq!(res.outcome, Outcome::Converged { t: 0.0, j: 0 });
        assert_eq!(res.trajectory.samples.len(), 1);
    }

    #[test]
    fn shadow_axis_start_avoids_once() {
        let ws = single();
        let res = run(&ws, &vec_of(&[4.5, 0.0]), &RunConfig::default()).unwrap();
        assert!(res.outcome.converged(), "{:?}", res.outcome);
        assert_eq!(res.trajectory.activations.len(), 1);
        // one entry jump and one exit jump
        assert_eq!(res.trajectory.switches.len(), 2);
        // the maneuver slides along the surface
        let min = res
            .trajectory
            .samples
            .iter()
            .map(|s| s.clearance)
            .fold(f64::INFINITY, f64::min);
        assert!(min.abs() < 1e-6, "{min}");
    }

    #[test]
    fn jumps_are_continuous_and_counted() {
        let ws = single();
        let res = run(&ws, &vec_of(&[4.5, 0.3]), &RunConfig::default()).unwrap();
        assert!(res.outcome.converged());
        let traj = &res.trajectory;
        for (i, w) in traj.samples.windows(2).enumerate() {
            assert!(w[1].t >= w[0].t, "time decreases at {i}");
            assert!(w[1].j >= w[0].j);
        }
        let last = traj.samples.last().unwrap();
        assert_eq!(last.j as usize, traj.switches.len());
        for s in &traj.switches {
            let scale = 1e-8 * ws.gamma() * (1.0 + (&s.x - ws.target()).norm());
            assert!((&s.u_after - &s.u_before).norm() <= scale, "{s:?}");
        }
    }

    #[test]
    fn entering_another_region_switches_once() {
        // Start outside every region, the flow then crosses the shell.
        let ws = single();
        let res = run(&ws, &vec_of(&[6.0, 0.2]), &RunConfig::default()).unwrap();
        assert!(res.outcome.converged());
        let first = &res.trajectory.switches[0];
        assert_eq!(first.m_from, Mode::Zero);
        assert!(first.m_to.is_avoidance());
        assert_eq!(first.j, 1);
        // crossing located on the shell
        let o = &ws.obstacles()[0];
        let d = (&first.x - &o.center).norm() - o.radius;
        assert_abs_diff_eq!(d, o.active_range, epsilon = 1e-9);
    }

    #[test]
    fn original_maps_on_the_shell_are_zeno() {
        // On the shell the point is in the closed active region but outside
        // the open one, so the original maps bounce between the two modes.
        let ws = single();
        let o = &ws.obstacles()[0];
        let x0 = vec_of(&[2.0 + o.radius + o.active_range, 0.0]);
        let cfg = RunConfig {
            priority: Priority::Jump,
            controller: ControllerConfig {
                mode_map: ModeMap::Original,
                mode_choice: ModeChoice::Original,
                ..ControllerConfig::default()
            },
            ..RunConfig::default()
        };
        let res = run(&ws, &x0, &cfg).unwrap();
        assert!(
            matches!(res.outcome, Outcome::ZenoFault { .. }),
            "{:?}",
            res.outcome
        );

        // The Zeno-free maps with flow priority settle the same state.
        assert!(run(&ws, &x0, &RunConfig::default())
            .unwrap()
            .outcome
            .converged());
    }

    #[test]
    fn timeout_and_config_errors() {
        let ws = single();
        let cfg = RunConfig {
            t_max: 0.01,
            ..RunConfig::default()
        };
        let res = run(&ws, &vec_of(&[-3.0, 1.0]), &cfg).unwrap();
        assert!(matches!(res.outcome, Outcome::Timeout { .. }));

        let bad = RunConfig {
            jump_budget: Some(1),
            ..RunConfig::default()
        };
        assert!(matches!(
            run(&ws, &vec_of(&[-3.0, 1.0]), &bad),
            Err(RunError::Config(_))
        ));
        assert!(run(&ws, &vec_of(&[2.5, 0.0]), &RunConfig::default()).is_err());
    }

    #[test]
    fn unicycle_reaches_target() {
        // The margin keeps the imperfect tracking off the true surface.
        let ws = single();
        let cfg = RunConfig {
            t_max: 120.0,
            plant: Plant::Unicycle {
                drive: DriveParams::default(),
                heading: 0.0,
            },
            sensing: Sensing::Sensor(SensorSetup {
                scanner: Scanner::Planar(ScanConfig2D::new(0.5, 2.0).unwrap()),
                margin: 0.1,
                scan_period: 10,
            }),
            ..RunConfig::default()
        };
        let res = run(&ws, &vec_of(&[4.0, 0.5]), &cfg).unwrap();
        assert!(res.outcome.converged(), "{:?}", res.outcome);
        for s in &res.trajectory.samples {
            if let Some(d) = s.drive {
                assert!(d.v.abs() <= 0.31 && d.omega.abs() <= 1.9);
            }
        }
    }

    #[test]
    fn sensor_mode_converges() {
        let ws = single();
        let cfg = RunConfig {
            sensing: Sensing::Sensor(SensorSetup {
                scanner: Scanner::Planar(ScanConfig2D::new(0.5, 2.0).unwrap()),
                margin: 0.1,
                scan_period: 1,
            }),
            ..RunConfig::default()
        };
        let res = run(&ws, &vec_of(&[4.5, 0.2]), &cfg).unwrap();
        assert!(res.outcome.converged(), "{:?}", res.outcome);
        assert_eq!(res.trajectory.activations.len(), 1);
        let min = res
            .trajectory
            .samples
            .iter()
            .map(|s| s.clearance)
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.0);
    }
}
