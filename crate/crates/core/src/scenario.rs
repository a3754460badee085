//! Scenario files: a TOML description of a world, its starts and the run
//! settings, resolved into validated in-memory values.
//!
//! ```toml
//! name = "corridor"
//! dimension = 2
//! target = [0.0, 0.0]
//! starts = [[4.5, 0.3]]
//! seed = 7
//!
//! [[obstacles]]
//! center = [2.0, 0.0]
//! radius = 1.0
//!
//! [controller]
//! gamma = 1.5
//! mode_map = "zeno-free"
//!
//! [run]
//! dt = 0.001
//! ```

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerConfig, ModeChoice, ModeMap, VdPlane};
use crate::diffdrive::DriveParams;
use crate::executor::{Plant, Priority, RunConfig, Scanner, Sensing, SensorSetup};
use crate::geometry::VecN;
use crate::sensor::{ScanConfig2D, ScanConfig3D};
use crate::world::{validate, ObstacleSpec, Params, Violation, Workspace};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl From<Vec<Violation>> for ScenarioError {
    fn from(v: Vec<Violation>) -> Self {
        ScenarioError::Invalid(v.iter().map(|x| x.to_string()).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub dimension: usize,
    pub target: Vec<f64>,
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    pub random_starts: Option<RandomStarts>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleFile>,
    #[serde(default)]
    pub controller: ControllerFile,
    #[serde(default)]
    pub run: RunFile,
    pub sensor: Option<SensorFile>,
    pub drive: Option<DriveFile>,
    #[serde(default)]
    pub variants: Vec<VariantFile>,
}

/// Uniform starts drawn in a box, rejected while inside an obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomStarts {
    pub count: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Minimum clearance of a drawn start.
    #[serde(default)]
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleFile {
    pub center: Vec<f64>,
    pub radius: f64,
    pub active_range: Option<f64>,
    pub vd_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilon_fraction: Option<f64>,
    pub active_range_fraction: Option<f64>,
    pub vd_fraction: Option<f64>,
    pub aperture_factor: Option<f64>,
    pub mode_map: Option<ModeMap>,
    pub mode_choice: Option<ModeChoice>,
    pub vd_plane: Option<VdPlane>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingKind {
    #[default]
    KnownMap,
    Sensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    #[default]
    SingleIntegrator,
    Unicycle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub e_c: Option<f64>,
    pub jump_budget: Option<usize>,
    pub priority: Option<Priority>,
    pub sensing: Option<SensingKind>,
    pub plant: Option<PlantKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorFile {
    /// Planar angular resolution, degrees.
    pub resolution_deg: Option<f64>,
    pub polar_resolution_deg: Option<f64>,
    pub azimuth_resolution_deg: Option<f64>,
    pub range: Option<f64>,
    pub margin: Option<f64>,
    pub scan_period: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveFile {
    pub v_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub k_v: Option<f64>,
    pub p: Option<u32>,
    pub heading_deg: Option<f64>,
}

/// A named set of overrides compared against the other variants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantFile {
    pub name: String,
    pub sensing: Option<SensingKind>,
    pub plant: Option<PlantKind>,
    pub mode_map: Option<ModeMap>,
    pub mode_choice: Option<ModeChoice>,
    pub vd_plane: Option<VdPlane>,
    pub priority: Option<Priority>,
}

/// Command-line style overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub e_c: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub mode_map: Option<ModeMap>,
    pub mode_choice: Option<ModeChoice>,
    pub priority: Option<Priority>,
    pub sensing: Option<SensingKind>,
}

impl Overrides {
    pub fn apply(&self, f: &mut ScenarioFile) {
        let set = |dst: &mut Option<f64>, v: Option<f64>| {
            if v.is_some() {
                *dst = v;
            }
        };
        set(&mut f.run.dt, self.dt);
        set(&mut f.run.t_max, self.t_max);
        set(&mut f.run.e_c, self.e_c);
        set(&mut f.controller.gamma, self.gamma);
        if self.seed.is_some() {
            f.seed = self.seed;
        }
        if self.mode_map.is_some() {
            f.controller.mode_map = self.mode_map;
        }
        if self.mode_choice.is_some() {
            f.controller.mode_choice = self.mode_choice;
        }
        if self.priority.is_some() {
            f.run.priority = self.priority;
        }
        if self.sensing.is_some() {
            f.run.sensing = self.sensing;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: RunConfig,
}

/// A parsed, defaulted and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub target: VecN,
    pub obstacles: Vec<ObstacleSpec>,
    pub starts: Vec<VecN>,
    pub seed: u64,
    pub params: Params,
    pub variants: Vec<Variant>,
    /// Every parameter that took its default, as `key = value`.
    pub defaults: Vec<String>,
    /// The file contents after overrides, for echoing into outputs.
    pub source: ScenarioFile,
}

impl Scenario {
    pub fn dimension(&self) -> usize {
        self.target.len()
    }

    pub fn workspace(&self) -> Result<Workspace, ScenarioError> {
        Workspace::new(self.target.clone(), &self.obstacles, &self.params)
            .map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {}D, {} obstacles, {} starts, {} variants",
            self.name,
            self.dimension(),
            self.obstacles.len(),
            self.starts.len(),
            self.variants.len()
        )?;
        for d in &self.defaults {
            writeln!(f, "  default {d}")?;
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    load_scenario_with(path, &Overrides::default())
}

pub fn load_scenario_with(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let mut file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    overrides.apply(&mut file);
    resolve(file)
}

/// Records defaulted keys while filling them in.
struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: fmt::Debug + Clone>(&mut self, key: &str, v: Option<T>, default: T) -> T {
        match v {
            Some(v) => v,
            None => {
                self.0.push(format!("{key} = {default:?}"));
                default
            }
        }
    }
}

fn vec_checked(what: &str, v: &[f64], n: usize, errs: &mut Vec<String>) -> VecN {
    if v.len() != n {
        errs.push(format!("{what} has {} coordinates, expected {n}", v.len()));
    }
    let mut out = VecN::zeros(n);
    for (i, x) in v.iter().take(n).enumerate() {
        out[i] = *x;
    }
    out
}

pub fn resolve(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let n = file.dimension;
    let mut errs = Vec::new();
    if n < 2 {
        errs.push(format!("dimension {n} is below 2"));
        return Err(ScenarioError::Invalid(errs));
    }
    let mut d = Defaults(Vec::new());
    let name = d.take("name", file.name.clone(), "scenario".to_string());
    let target = vec_checked("target", &file.target, n, &mut errs);
    let obstacles: Vec<ObstacleSpec> = file
        .obstacles
        .iter()
        .enumerate()
        .map(|(k, o)| ObstacleSpec {
            center: vec_checked(&format!("obstacle {k} center"), &o.center, n, &mut errs),
            radius: o.radius,
            active_range: o.active_range,
            vd_distance: o.vd_distance,
        })
        .collect();
    let seed = d.take("seed", file.seed, 0);

    let c = &file.controller;
    let base = Params::default();
    let params = Params {
        gamma: d.take("controller.gamma", c.gamma, base.gamma),
        epsilon: c.epsilon,
        epsilon_fraction: d.take(
            "controller.epsilon_fraction",
            c.epsilon_fraction,
            base.epsilon_fraction,
        ),
        active_range_fraction: d.take(
            "controller.active_range_fraction",
            c.active_range_fraction,
            base.active_range_fraction,
        ),
        vd_fraction: d.take("controller.vd_fraction", c.vd_fraction, base.vd_fraction),
        aperture_factor: d.take(
            "controller.aperture_factor",
            c.aperture_factor,
            base.aperture_factor,
        ),
        sensor_range: None,
    };
    let controller = ControllerConfig {
        mode_map: d.take("controller.mode_map", c.mode_map, ModeMap::ZenoFree),
        mode_choice: d.take(
            "controller.mode_choice",
            c.mode_choice,
            ModeChoice::Continuity,
        ),
        vd_plane: d.take("controller.vd_plane", c.vd_plane, VdPlane::Entry),
    };

    let defaults_run = RunConfig::default();
    let r = &file.run;
    let sensing_kind = d.take("run.sensing", r.sensing, SensingKind::KnownMap);
    let plant_kind = d.take("run.plant", r.plant, PlantKind::SingleIntegrator);

    let sensor = match &file.sensor {
        Some(s) => Some(resolve_sensor(s, n, &mut d, &mut errs)),
        None => None,
    };
    let drive = file.drive.clone().map(|f| {
        let base = DriveParams::default();
        let drive = DriveParams {
            v_max: d.take("drive.v_max", f.v_max, base.v_max),
            omega_max: d.take("drive.omega_max", f.omega_max, base.omega_max),
            k_v: d.take("drive.k_v", f.k_v, base.k_v),
            p: d.take("drive.p", f.p, base.p),
        };
        let heading = d.take("drive.heading_deg", f.heading_deg, 0.0).to_radians();
        Plant::Unicycle { drive, heading }
    });

    let config = RunConfig {
        dt: d.take("run.dt", r.dt, defaults_run.dt),
        t_max: d.take("run.t_max", r.t_max, defaults_run.t_max),
        e_c: d.take("run.e_c", r.e_c, defaults_run.e_c),
        jump_budget: r.jump_budget,
        priority: d.take("run.priority", r.priority, Priority::Flow),
        controller,
        plant: Plant::SingleIntegrator,
        sensing: Sensing::KnownMap,
        params: params.clone(),
    };

    let build = |name: &str,
                 sensing: SensingKind,
                 plant: PlantKind,
                 cfg: RunConfig,
                 errs: &mut Vec<String>|
     -> RunConfig {
        let mut cfg = cfg;
        cfg.sensing = match sensing {
            SensingKind::KnownMap => Sensing::KnownMap,
            SensingKind::Sensor => match sensor {
                Some(s) => Sensing::Sensor(s),
                None => {
                    errs.push(format!("variant {name} needs a [sensor] section"));
                    Sensing::KnownMap
                }
            },
        };
        cfg.plant = match plant {
            PlantKind::SingleIntegrator => Plant::SingleIntegrator,
            PlantKind::Unicycle => drive.unwrap_or(Plant::Unicycle {
                drive: DriveParams::default(),
                heading: 0.0,
            }),
        };
        cfg
    };

    let mut variants = Vec::new();
    if file.variants.is_empty() {
        variants.push(Variant {
            name: "main".into(),
            config: build("main", sensing_kind, plant_kind, config.clone(), &mut errs),
        });
    }
    for v in &file.variants {
        let mut cfg = config.clone();
        if let Some(m) = v.mode_map {
            cfg.controller.mode_map = m;
        }
        if let Some(m) = v.mode_choice {
            cfg.controller.mode_choice = m;
        }
        if let Some(p) = v.vd_plane {
            cfg.controller.vd_plane = p;
        }
        if let Some(p) = v.priority {
            cfg.priority = p;
        }
        let cfg = build(
            &v.name,
            v.sensing.unwrap_or(sensing_kind),
            v.plant.unwrap_or(plant_kind),
            cfg,
            &mut errs,
        );
        if variants.iter().any(|x: &Variant| x.name == v.name) {
            errs.push(format!("duplicate variant name {}", v.name));
        }
        variants.push(Variant {
            name: v.name.clone(),
            config: cfg,
        });
    }

    if !errs.is_empty() {
        return Err(ScenarioError::Invalid(errs));
    }
    let violations = validate(&target, &obstacles, &params);
    if !violations.is_empty() {
        return Err(violations.into());
    }
    let ws = Workspace::new(target.clone(), &obstacles, &params)
        .map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))?;
    for v in &variants {
        v.config
            .validate(&ws)
            .map_err(|e| ScenarioError::Invalid(vec![format!("variant {}: {e}", v.name)]))?;
    }

    let mut starts: Vec<VecN> = file
        .starts
        .iter()
        .enumerate()
        .map(|(i, s)| vec_checked(&format!("start {i}"), s, n, &mut errs))
        .collect();
    if let Some(rs) = &file.random_starts {
        starts.extend(random_starts(rs, &ws, seed, &mut errs));
    }
    for (i, s) in starts.iter().enumerate() {
        if let Some(k) = (0..ws.len()).find(|&k| ws.distance_to(s, k) < 0.0) {
            errs.push(format!("start {i} lies inside obstacle {k}"));
        }
    }
    if starts.is_empty() {
        errs.push("no starts given".into());
    }
    if !errs.is_empty() {
        return Err(ScenarioError::Invalid(errs));
    }

    Ok(Scenario {
        name,
        target,
        obstacles,
        starts,
        seed,
        params,
        variants,
        defaults: d.0,
        source: file,
    })
}

fn resolve_sensor(
    s: &SensorFile,
    n: usize,
    d: &mut Defaults,
    errs: &mut Vec<String>,
) -> SensorSetup {
    let range = d.take("sensor.range", s.range, 2.0);
    let margin = d.take("sensor.margin", s.margin, 0.1);
    let scan_period = d.take("sensor.scan_period", s.scan_period, 1);
    let scanner = if n == 2 {
        let res = d.take("sensor.resolution_deg", s.resolution_deg, 0.5);
        ScanConfig2D::new(res, range).map(Scanner::Planar)
    } else {
        let polar = d.take("sensor.polar_resolution_deg", s.polar_resolution_deg, 1.0);
        let az = d.take(
            "sensor.azimuth_resolution_deg",
            s.azimuth_resolution_deg,
            1.0,
        );
        ScanConfig3D::new(polar, az, range).map(Scanner::Spherical)
    };
    let scanner = scanner.unwrap_or_else(|e| {
        errs.push(e.to_string());
        Scanner::Planar(ScanConfig2D {
            resolution: 1.0,
            range: 1.0,
        })
    });
    SensorSetup {
        scanner,
        margin,
        scan_period,
    }
}

fn random_starts(
    rs: &RandomStarts,
    ws: &Workspace,
    seed: u64,
    errs: &mut Vec<String>,
) -> Vec<VecN> {
    let n = ws.dim();
    if rs.min.len() != n || rs.max.len() != n || rs.min.iter().zip(&rs.max).any(|(a, b)| !(a < b)) {
        errs.push("random_starts needs min < max with one bound per coordinate".into());
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rs.count);
    let mut tries = 0usize;
    while out.len() < rs.count {
        tries += 1;
        if tries > 1000 * (rs.count + 1) {
            errs.push("random_starts: free space too small to draw starts".into());
            break;
        }
        let p = VecN::from_fn(n, |i, _| rng.random_range(rs.min[i]..rs.max[i]));
        if ws.clearance(&p) > rs.clearance.max(0.0) {
            out.push(p);
        }
    }
    out
}
