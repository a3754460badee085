//! Workspace model: validated spherical obstacles around a target, plus the
//! region predicates (shadow, active region, exit set, hat).

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::{angle_or_zero, Relation, VecN, TAU_CONE};

/// Boundary samples used when the hidden-obstacle test is not settled
/// analytically.
pub const HIDDEN_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSpec {
    pub center: VecN,
    pub radius: f64,
    /// Explicit active range; derived from the range fraction when absent.
    pub active_range: Option<f64>,
    /// Explicit virtual-destination distance; derived when absent.
    pub vd_distance: Option<f64>,
}

impl ObstacleSpec {
    pub fn new(center: VecN, radius: f64) -> Self {
        Self {
            center,
            radius,
            active_range: None,
            vd_distance: None,
        }
    }

    pub fn with_active_range(mut self, r: f64) -> Self {
        self.active_range = Some(r);
        self
    }

    pub fn with_vd_distance(mut self, e: f64) -> Self {
        self.vd_distance = Some(e);
        self
    }
}

/// Controller parameters that shape the workspace-derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub gamma: f64,
    /// Blend width; when `None` it is `epsilon_fraction * min_k r̄_k`, by
    /// default the widest ramp allowed.
    pub epsilon: Option<f64>,
    pub epsilon_fraction: f64,
    /// Default active range is this fraction of `min(r̂_k, R, r_k)`.
    pub active_range_fraction: f64,
    /// Default `e_k` as a fraction of the half-space bound.
    pub vd_fraction: f64,
    /// Safety factor applied to the aperture bound.
    pub aperture_factor: f64,
    /// Sensor range `R`, only set for sensor-based operation.
    pub sensor_range: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            epsilon: None,
            epsilon_fraction: 1.0,
            active_range_fraction: 0.5,
            vd_fraction: 0.9,
            aperture_factor: 0.9,
            sensor_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite(String),
    DimensionTooSmall(usize),
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    NonPositiveRadius {
        k: usize,
        radius: f64,
    },
    Overlap {
        i: usize,
        j: usize,
        distance: f64,
        radii: f64,
    },
    TargetNotFree {
        k: usize,
        clearance: f64,
    },
    BadGain(f64),
    BadEpsilon {
        epsilon: f64,
        max: f64,
    },
    BadActiveRange {
        k: usize,
        value: f64,
        limit: f64,
    },
    BadVdDistance {
        k: usize,
        value: f64,
        limit: f64,
    },
    BadFraction {
        name: &'static str,
        value: f64,
    },
    BadSensorRange(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(what) => write!(f, "{what} has a non-finite coordinate"),
            Violation::DimensionTooSmall(n) => write!(f, "dimension {n} is below 2"),
            Violation::DimensionMismatch { what, expected, got } => {
                write!(f, "{what} has dimension {got}, expected {expected}")
            }
            Violation::NonPositiveRadius { k, radius } => {
                write!(f, "obstacle {k} has non-positive radius {radius}")
            }
            Violation::Overlap { i, j, distance, radii } => write!(
                f,
                "obstacles {i} and {j} are not disjoint (center distance {distance} <= {radii})"
            ),
            Violation::TargetNotFree { k, clearance } => write!(
                f,
                "target is not in the interior of free space (clearance {clearance} to obstacle {k})"
            ),
            Violation::BadGain(g) => write!(f, "gain {g} must be positive"),
            Violation::BadEpsilon { epsilon, max } => {
                write!(f, "blend width {epsilon} must lie in (0, {max}]")
            }
            Violation::BadActiveRange { k, value, limit } => {
                write!(f, "active range {value} of obstacle {k} must lie in (0, {limit})")
            }
            Violation::BadVdDistance { k, value, limit } => write!(
                f,
                "virtual-destination distance {value} of obstacle {k} must lie in (0, {limit}]"
            ),
            Violation::BadFraction { name, value } => {
                write!(f, "{name} = {value} must lie in (0, 1)")
            }
            Violation::BadSensorRange(r) => write!(f, "sensor range {r} must be positive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("invalid workspace: {}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("point lies inside obstacle {k} (distance {distance} < radius {radius})")]
    InsideObstacle {
        k: usize,
        distance: f64,
        radius: f64,
    },
    #[error("obstacle index {0} out of range")]
    NoSuchObstacle(usize),
    #[error("workspace has no obstacles")]
    Empty,
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A validated obstacle with its derived avoidance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub center: VecN,
    pub radius: f64,
    pub active_range: f64,
    pub vd_distance: f64,
    pub aperture: f64,
    /// Largest admissible `e_k`, `(d - r) / cos θ(x_d, k)`.
    pub vd_bound: f64,
    /// `r̂_k` with respect to the target.
    pub r_hat: f64,
}

/// Shadow cone of one obstacle as seen from a destination, with the
/// active-region shell radius. Evaluates the three defining expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowGeometry {
    pub dest: VecN,
    pub center: VecN,
    axis: VecN,
    axis_norm: f64,
    cos_theta: f64,
    pub reach: f64,
}

/// Signed slacks of the active-region constraints at a point.
///
/// `cone` is `lhs - rhs` of the cone inequality (≤ 0 inside), `behind` is
/// `(c - q)ᵀ(dest - q)` (≥ 0 inside) and `ball` is `‖q - c‖ - (r + r̄)`
/// (≤ 0 inside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSlack {
    pub cone: f64,
    pub behind: f64,
    pub ball: f64,
}

impl RegionSlack {
    pub fn closed(&self, tol: f64) -> bool {
        self.cone <= tol && self.behind >= -tol && self.ball <= tol
    }

    pub fn interior(&self, tol: f64) -> bool {
        self.cone < -tol && self.behind > tol && self.ball < -tol
    }

    pub fn shadow(&self, tol: f64) -> bool {
        self.cone <= tol && self.behind >= -tol
    }
}

impl ShadowGeometry {
    pub fn new(dest: &VecN, center: &VecN, radius: f64, reach: f64) -> Self {
        let axis = center - dest;
        let axis_norm = axis.norm();
        let ratio = (radius / axis_norm).min(1.0);
        Self {
            dest: dest.clone(),
            center: center.clone(),
            axis,
            axis_norm,
            cos_theta: (1.0 - ratio * ratio).max(0.0).sqrt(),
            reach,
        }
    }

    pub fn slack(&self, q: &VecN) -> RegionSlack {
        let mut dq2 = 0.0;
        let mut ax = 0.0;
        let mut cq2 = 0.0;
        let mut behind = 0.0;
        for i in 0..q.len() {
            let dq = q[i] - self.dest[i];
            let cq = self.center[i] - q[i];
            dq2 += dq * dq;
            ax += self.axis[i] * dq;
            cq2 += cq * cq;
            behind += cq * (-dq);
        }
        RegionSlack {
            cone: self.axis_norm * dq2.sqrt() * self.cos_theta - ax,
            behind,
            ball: cq2.sqrt() - self.reach,
        }
    }

    pub fn axis(&self) -> &VecN {
        &self.axis
    }

    pub fn theta(&self) -> f64 {
        self.cos_theta.acos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    dim: usize,
    target: VecN,
    obstacles: Vec<Obstacle>,
    gamma: f64,
    epsilon: f64,
    aperture_factor: f64,
    sensor_range: Option<f64>,
    target_shadows: Vec<ShadowGeometry>,
}

/// Checks the raw workspace data and reports every violation found.
pub fn validate(target: &VecN, specs: &[ObstacleSpec], params: &Params) -> Vec<Violation> {
    let mut out = base_violations(target, specs, params);
    if !out.is_empty() {
        return out;
    }
    // Derived quantities only make sense on sound geometry.
    let derived = derive(target, specs, params);
    for (k, (spec, d)) in specs.iter().zip(&derived).enumerate() {
        let limit = range_limit(d.r_hat, params.sensor_range);
        if !(d.active_range > 0.0 && d.active_range < limit) {
            out.push(Violation::BadActiveRange {
                k,
                value: d.active_range,
                limit,
            });
        }
        if !(d.vd_distance > 0.0 && d.vd_distance <= d.vd_bound) {
            out.push(Violation::BadVdDistance {
                k,
                value: d.vd_distance,
                limit: d.vd_bound,
            });
        }
        let _ = spec;
    }
    if !specs.is_empty() {
        let max = derived
            .iter()
            .map(|d| d.active_range)
            .fold(f64::INFINITY, f64::min);
        let eps = params.epsilon.unwrap_or(params.epsilon_fraction * max);
        if !(eps > 0.0 && eps <= max) {
            out.push(Violation::BadEpsilon { epsilon: eps, max });
        }
    }
    out
}

fn range_limit(r_hat: f64, sensor_range: Option<f64>) -> f64 {
    match sensor_range {
        Some(r) => r_hat.min(r),
        None => r_hat,
    }
}

fn base_violations(target: &VecN, specs: &[ObstacleSpec], params: &Params) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = target.len();
    if n < 2 {
        out.push(Violation::DimensionTooSmall(n));
    }
    if target.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite("target".into()));
    }
    for (k, s) in specs.iter().enumerate() {
        if s.center.len() != n {
            out.push(Violation::DimensionMismatch {
                what: format!("obstacle {k} center"),
                expected: n,
                got: s.center.len(),
            });
        }
        if s.center.iter().any(|v| !v.is_finite()) || !s.radius.is_finite() {
            out.push(Violation::NonFinite(format!("obstacle {k}")));
        }
        if !(s.radius > 0.0) {
            out.push(Violation::NonPositiveRadius {
                k,
                radius: s.radius,
            });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for i in 0..specs.len() {
        for j in i + 1..specs.len() {
            let distance = (&specs[i].center - &specs[j].center).norm();
            let radii = specs[i].radius + specs[j].radius;
            if distance <= radii {
                out.push(Violation::Overlap {
                    i,
                    j,
                    distance,
                    radii,
                });
            }
        }
        let clearance = (&specs[i].center - target).norm() - specs[i].radius;
        if clearance <= 0.0 {
            out.push(Violation::TargetNotFree { k: i, clearance });
        }
    }
    if !(params.gamma > 0.0 && params.gamma.is_finite()) {
        out.push(Violation::BadGain(params.gamma));
    }
    for (name, value) in [
        ("epsilon_fraction", params.epsilon_fraction),
        ("active_range_fraction", params.active_range_fraction),
        ("vd_fraction", params.vd_fraction),
        ("aperture_factor", params.aperture_factor),
    ] {
        if !(value > 0.0 && value < 1.0) && !(name == "epsilon_fraction" && value == 1.0) {
            out.push(Violation::BadFraction { name, value });
        }
    }
    if let Some(r) = params.sensor_range {
        if !(r > 0.0) {
            out.push(Violation::BadSensorRange(r));
        }
    }
    out
}

struct Derived {
    active_range: f64,
    vd_distance: f64,
    vd_bound: f64,
    r_hat: f64,
}

fn derive(target: &VecN, specs: &[ObstacleSpec], params: &Params) -> Vec<Derived> {
    (0..specs.len())
        .map(|k| {
            let s = &specs[k];
            let r_hat = r_hat_of(k, target, specs);
            // Surface gap to the nearest neighbour, hidden or not. Keeping
            // the shell inside half of it also keeps the virtual-destination
            // active regions clear of every other obstacle.
            let gap = (0..specs.len())
                .filter(|&j| j != k)
                .map(|j| (&s.center - &specs[j].center).norm() - s.radius - specs[j].radius)
                .fold(f64::INFINITY, f64::min);
            let active_range = s.active_range.unwrap_or_else(|| {
                let mut m = r_hat.min(s.radius).min(gap);
                if let Some(r) = params.sensor_range {
                    m = m.min(r);
                }
                params.active_range_fraction * m
            });
            let d = (&s.center - target).norm();
            let cos_t = (1.0 - (s.radius / d).powi(2)).max(0.0).sqrt();
            let vd_bound = (d - s.radius) / cos_t;
            let vd_distance = s.vd_distance.unwrap_or(params.vd_fraction * vd_bound);
            Derived {
                active_range,
                vd_distance,
                vd_bound,
                r_hat,
            }
        })
        .collect()
}

fn r_hat_of(k: usize, dest: &VecN, specs: &[ObstacleSpec]) -> f64 {
    let ck = &specs[k].center;
    let rk = specs[k].radius;
    hidden_by(k, dest, specs)
        .into_iter()
        .map(|j| (ck - &specs[j].center).norm() - rk - specs[j].radius)
        .fold(f64::INFINITY, f64::min)
}

fn hidden_by(k: usize, dest: &VecN, specs: &[ObstacleSpec]) -> Vec<usize> {
    let sk = &specs[k];
    let shadow = ShadowGeometry::new(dest, &sk.center, sk.radius, f64::INFINITY);
    (0..specs.len())
        .filter(|&j| j != k && boundary_meets_shadow(&shadow, &specs[j].center, specs[j].radius))
        .collect()
}

fn boundary_meets_shadow(shadow: &ShadowGeometry, cj: &VecN, rj: f64) -> bool {
    let w = cj - &shadow.dest;
    let wn = w.norm();
    let theta = shadow.theta();
    let spread = (rj / wn).min(1.0).asin();
    if angle_or_zero(&w, shadow.axis()) > theta + spread + 1e-9 {
        return false;
    }
    // Entirely inside the Thales ball on [dest, c_k]: in front of the obstacle.
    let mid = (&shadow.dest + &shadow.center) * 0.5;
    if (cj - &mid).norm() + rj < 0.5 * shadow.axis_norm - TAU_CONE {
        return false;
    }
    let unit = shadow.axis() / shadow.axis_norm;
    let mut probes = vec![cj + &unit * rj, cj - &unit * rj];
    // Point of the sphere nearest the axis line.
    let foot = &shadow.dest + &unit * unit.dot(&w);
    let off = cj - &foot;
    if off.norm() > 0.0 {
        probes.push(cj - &off * (rj / off.norm()));
    }
    if probes.iter().any(|q| shadow.slack(q).shadow(TAU_CONE)) {
        return true;
    }
    boundary_samples(cj, rj, HIDDEN_SAMPLES)
        .iter()
        .any(|q| shadow.slack(q).shadow(TAU_CONE))
}

/// Deterministic points on the sphere `∂B(center, radius)`: a uniform circle
/// in 2D, a Fibonacci lattice in 3D and seeded Gaussian directions above.
pub fn boundary_samples(center: &VecN, radius: f64, count: usize) -> Vec<VecN> {
    let n = center.len();
    match n {
        2 => (0..count)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / count as f64;
                let mut q = center.clone();
                q[0] += radius * a.cos();
                q[1] += radius * a.sin();
                q
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    let mut q = center.clone();
                    q[0] += radius * rho * a.cos();
                    q[1] += radius * rho * a.sin();
                    q[2] += radius * z;
                    q
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + n as u64);
            (0..count)
                .map(|_| {
                    let mut d = VecN::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    let norm = d.norm().max(f64::MIN_POSITIVE);
                    d /= norm;
                    center + d * radius
                })
                .collect()
        }
    }
}

impl Workspace {
    pub fn new(target: VecN, specs: &[ObstacleSpec], params: &Params) -> Result<Self, WorldError> {
        let violations = validate(&target, specs, params);
        if !violations.is_empty() {
            return Err(WorldError::Invalid(violations));
        }
        let derived = derive(&target, specs, params);
        let min_range = derived
            .iter()
            .map(|d| d.active_range)
            .fold(f64::INFINITY, f64::min);
        let epsilon = params
            .epsilon
            .unwrap_or(params.epsilon_fraction * min_range);
        let obstacles: Vec<Obstacle> = specs
            .iter()
            .zip(derived)
            .map(|(s, d)| {
                let dist = (&s.center - &target).norm();
                Obstacle {
                    center: s.center.clone(),
                    radius: s.radius,
                    active_range: d.active_range,
                    vd_distance: d.vd_distance,
                    aperture: aperture_for(dist, s.radius, d.vd_distance, params.aperture_factor),
                    vd_bound: d.vd_bound,
                    r_hat: d.r_hat,
                }
            })
            .collect();
        let target_shadows = obstacles
            .iter()
            .map(|o| ShadowGeometry::new(&target, &o.center, o.radius, o.radius + o.active_range))
            .collect();
        Ok(Self {
            dim: target.len(),
            target,
            obstacles,
            gamma: params.gamma,
            epsilon: if specs.is_empty() { 0.0 } else { epsilon },
            aperture_factor: params.aperture_factor,
            sensor_range: params.sensor_range,
            target_shadows,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target(&self) -> &VecN {
        &self.target
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn obstacle(&self, k: usize) -> Result<&Obstacle, WorldError> {
        self.obstacles.get(k).ok_or(WorldError::NoSuchObstacle(k))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn aperture_factor(&self) -> f64 {
        self.aperture_factor
    }

    pub fn sensor_range(&self) -> Option<f64> {
        self.sensor_range
    }

    /// Specs reproducing this workspace's obstacles with their derived
    /// parameters pinned.
    pub fn specs(&self) -> Vec<ObstacleSpec> {
        self.obstacles
            .iter()
            .map(|o| ObstacleSpec {
                center: o.center.clone(),
                radius: o.radius,
                active_range: Some(o.active_range),
                vd_distance: Some(o.vd_distance),
            })
            .collect()
    }

    pub(crate) fn target_shadow(&self, k: usize) -> &ShadowGeometry {
        &self.target_shadows[k]
    }

    /// `d(q, O_k)`, negative inside.
    pub fn distance_to(&self, q: &VecN, k: usize) -> f64 {
        let o = &self.obstacles[k];
        (q - &o.center).norm() - o.radius
    }

    /// Minimum signed distance to any obstacle (`+∞` when there are none).
    pub fn clearance(&self, q: &VecN) -> f64 {
        (0..self.obstacles.len())
            .map(|k| self.distance_to(q, k))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_free_space(&self, q: &VecN) -> bool {
        self.clearance(q) >= -TAU_CONE
    }

    pub fn theta(&self, q: &VecN, k: usize) -> Result<f64, WorldError> {
        let o = self.obstacle(k)?;
        let distance = (q - &o.center).norm();
        if distance < o.radius * (1.0 - 1e-12) {
            return Err(WorldError::InsideObstacle {
                k,
                distance,
                radius: o.radius,
            });
        }
        Ok(surface_angle(o.radius / distance))
    }

    /// θ with the ratio clamped to 1, for points within tolerance of the
    /// surface.
    pub(crate) fn theta_clamped(&self, q: &VecN, k: usize) -> f64 {
        let o = &self.obstacles[k];
        surface_angle(o.radius / (q - &o.center).norm())
    }

    fn shadow_from(&self, k: usize, dest: &VecN) -> ShadowGeometry {
        let o = &self.obstacles[k];
        if dest == &self.target {
            return self.target_shadows[k].clone();
        }
        ShadowGeometry::new(dest, &o.center, o.radius, o.radius + o.active_range)
    }

    pub fn in_shadow(&self, q: &VecN, k: usize, dest: &VecN) -> bool {
        self.in_free_space(q) && self.shadow_from(k, dest).slack(q).shadow(TAU_CONE)
    }

    pub fn hidden_obstacles(&self, k: usize, dest: &VecN) -> Vec<usize> {
        hidden_by(k, dest, &self.specs())
    }

    pub fn r_hat(&self, k: usize, dest: &VecN) -> f64 {
        r_hat_of(k, dest, &self.specs())
    }

    pub fn in_active_region(&self, q: &VecN, k: usize, dest: &VecN) -> bool {
        self.in_free_space(q) && self.shadow_from(k, dest).slack(q).closed(TAU_CONE)
    }

    fn on_cone_surface(&self, q: &VecN, k: usize, dest: &VecN) -> bool {
        Relation::Eq.holds(self.shadow_from(k, dest).slack(q).cone, 0.0, TAU_CONE)
    }

    pub fn in_exit_set(&self, q: &VecN, k: usize, dest: &VecN) -> bool {
        self.on_cone_surface(q, k, dest) && self.in_active_region(q, k, dest)
    }

    pub fn in_hat(&self, q: &VecN, k: usize, dest: &VecN) -> bool {
        self.in_free_space(q) && self.on_cone_surface(q, k, dest) && !self.in_exit_set(q, k, dest)
    }

    /// Union of the active regions with respect to the target.
    pub fn in_active_free_space(&self, q: &VecN) -> bool {
        self.in_free_space(q)
            && self
                .target_shadows
                .iter()
                .any(|s| s.slack(q).closed(TAU_CONE))
    }
}

/// `asin(ratio)` with ratios within rounding of 1 mapped to exactly `π/2`;
/// `asin` amplifies a relative error `δ` near 1 into `√(2δ)`.
fn surface_angle(ratio: f64) -> f64 {
    if ratio >= 1.0 - SURFACE_SNAP {
        std::f64::consts::FRAC_PI_2
    } else {
        ratio.asin()
    }
}

const SURFACE_SNAP: f64 = 1e-14;

/// Aperture of the per-mode exclusion cones for an obstacle at distance `d`
/// from the target, from the angle between the two virtual-destination axes.
pub(crate) fn aperture_for(d: f64, r: f64, e: f64, factor: f64) -> f64 {
    let sin_t = (r / d).min(1.0);
    let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
    let psi = 2.0 * (e * sin_t).atan2(d - e * cos_t);
    aperture_from_psi(psi, factor)
}

pub(crate) fn aperture_from_psi(psi: f64, factor: f64) -> f64 {
    factor * (psi / 2.0).min((std::f64::consts::PI - psi) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec_of;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    fn v(c: &[f64]) -> VecN {
        vec_of(c)
    }

    fn single(active: f64) -> Workspace {
        Workspace::new(
            v(&[0.0, 0.0]),
            &[ObstacleSpec::new(v(&[2.0, 0.0]), 1.0).with_active_range(active)],
            &Params::default(),
        )
        .unwrap()
    }

    #[test]
    fn validate_examples() {
        let p = Params::default();
        let ok = [
            ObstacleSpec::new(v(&[0.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[3.0, 0.0]), 1.0),
        ];
        assert!(validate(&v(&[10.0, 10.0]), &ok, &p).is_empty());

        let touching = [
            ObstacleSpec::new(v(&[0.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[2.0, 0.0]), 1.0),
        ];
        let out = validate(&v(&[10.0, 10.0]), &touching, &p);
        assert!(matches!(out[0], Violation::Overlap { i: 0, j: 1, .. }));

        let inside = [ObstacleSpec::new(v(&[2.0, 0.0]), 1.0)];
        let out = validate(&v(&[2.0, 0.0]), &inside, &p);
        assert!(matches!(out[0], Violation::TargetNotFree { k: 0, .. }));
        assert!(Workspace::new(v(&[2.0, 0.0]), &inside, &p).is_err());
    }

    #[test]
    fn validate_reports_every_violation() {
        let specs = [
            ObstacleSpec::new(v(&[0.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[1.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[9.0, 0.0]), -1.0),
        ];
        let p = Params {
            gamma: -1.0,
            ..Params::default()
        };
        let out = validate(&v(&[0.5, 0.0]), &specs, &p);
        assert!(out
            .iter()
            .any(|x| matches!(x, Violation::NonPositiveRadius { k: 2, .. })));
        let specs = &specs[..2];
        let out = validate(&v(&[0.5, 0.0]), specs, &p);
        assert!(out.iter().any(|x| matches!(x, Violation::Overlap { .. })));
        assert!(out
            .iter()
            .any(|x| matches!(x, Violation::TargetNotFree { .. })));
        assert!(out.iter().any(|x| matches!(x, Violation::BadGain(_))));
    }

    #[test]
    fn theta_examples() {
        let ws = single(0.5);
        assert_abs_diff_eq!(ws.theta(&v(&[1.0, 0.0]), 0).unwrap(), FRAC_PI_2);
        assert_abs_diff_eq!(
            ws.theta(&v(&[4.0, 0.0]), 0).unwrap(),
            FRAC_PI_6,
            epsilon = 1e-15
        );
        let q = v(&[2.0 + 2f64.sqrt(), 0.0]);
        assert_abs_diff_eq!(ws.theta(&q, 0).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert!(matches!(
            ws.theta(&v(&[2.0, 0.5]), 0),
            Err(WorldError::InsideObstacle { .. })
        ));
    }

    #[test]
    fn shadow_examples() {
        let ws = single(1.0);
        let o = v(&[0.0, 0.0]);
        assert!(ws.in_shadow(&v(&[4.0, 0.0]), 0, &o));
        assert!(!ws.in_shadow(&v(&[-1.0, 0.0]), 0, &o));
        // |q| cos(π/6) = 3.122 exceeds the axis component 2
        let q = v(&[2.0, 3.0]);
        assert!(13f64.sqrt() * FRAC_PI_6.cos() > 2.0);
        assert!(!ws.in_shadow(&q, 0, &o));
    }

    #[test]
    fn region_examples() {
        let ws = single(1.0);
        let o = v(&[0.0, 0.0]);
        assert!(ws.in_active_region(&v(&[4.0, 0.0]), 0, &o));
        assert!(ws.in_shadow(&v(&[6.0, 0.0]), 0, &o));
        assert!(!ws.in_active_region(&v(&[6.0, 0.0]), 0, &o));
        let q = v(&[0.5 * FRAC_PI_6.cos(), 0.5 * FRAC_PI_6.sin()]);
        // on the near side of the Thales sphere, hence outside the shadow
        assert!((v(&[2.0, 0.0]) - &q).dot(&(-&q)) < 0.0);
        assert!(ws.in_hat(&q, 0, &o));
        assert!(!ws.in_exit_set(&q, 0, &o));
        // surface point beyond the tangent point, inside the shell
        let t = 3f64.sqrt() * 1.1;
        let e = v(&[t * FRAC_PI_6.cos(), t * FRAC_PI_6.sin()]);
        assert!(ws.in_exit_set(&e, 0, &o));
        assert!(!ws.in_hat(&e, 0, &o));
        assert!(ws.in_active_free_space(&v(&[3.5, 0.0])));
        assert!(!ws.in_active_free_space(&v(&[0.5, 0.0])));
    }

    #[test]
    fn hidden_examples() {
        let ws = single(0.5);
        assert!(ws.hidden_obstacles(0, ws.target()).is_empty());
        assert_eq!(ws.r_hat(0, ws.target()), f64::INFINITY);

        let p = Params::default();
        let specs = [
            ObstacleSpec::new(v(&[2.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[6.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[-3.0, 2.5]), 1.0),
        ];
        let ws = Workspace::new(v(&[0.0, 0.0]), &specs, &p).unwrap();
        let hidden = ws.hidden_obstacles(0, ws.target());
        assert_eq!(hidden, vec![1]);
        assert_abs_diff_eq!(ws.r_hat(0, ws.target()), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hidden_matches_sampling_oracle() {
        // 10^4 boundary samples, each tested with the public shadow predicate
        let p = Params::default();
        let specs = [
            ObstacleSpec::new(v(&[2.0, 0.0]), 1.0),
            ObstacleSpec::new(v(&[5.0, 1.2]), 0.8),
            ObstacleSpec::new(v(&[-2.0, -2.0]), 0.7),
            ObstacleSpec::new(v(&[4.0, -3.5]), 0.5),
        ];
        let ws = Workspace::new(v(&[0.0, 0.0]), &specs, &p).unwrap();
        for k in 0..specs.len() {
            let fast = ws.hidden_obstacles(k, ws.target());
            let oracle: Vec<usize> = (0..specs.len())
                .filter(|&j| j != k)
                .filter(|&j| {
                    (0..10_000).any(|i| {
                        let a = std::f64::consts::TAU * i as f64 / 1e4;
                        let q = &specs[j].center + v(&[a.cos(), a.sin()]) * specs[j].radius;
                        ws.in_shadow(&q, k, ws.target())
                    })
                })
                .collect();
            assert_eq!(fast, oracle, "obstacle {k}");
        }
    }

    #[test]
    fn default_parameters() {
        let ws = single_default();
        let o = &ws.obstacles()[0];
        assert_abs_diff_eq!(o.active_range, 0.5);
        assert_abs_diff_eq!(ws.epsilon(), 0.5);
        // (d - r)/cos θ = 1/cos(π/6)
        assert_abs_diff_eq!(o.vd_bound, 1.0 / FRAC_PI_6.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(o.vd_distance, 0.9 * o.vd_bound, epsilon = 1e-12);
    }

    fn single_default() -> Workspace {
        Workspace::new(
            v(&[0.0, 0.0]),
            &[ObstacleSpec::new(v(&[2.0, 0.0]), 1.0)],
            &Params::default(),
        )
        .unwrap()
    }

    #[test]
    fn sensor_range_caps_active_range() {
        let p = Params {
            sensor_range: Some(2.0),
            ..Params::default()
        };
        let ws = Workspace::new(
            v(&[0.0, 0.0]),
            &[ObstacleSpec::new(v(&[5.0, 0.0]), 3.0)],
            &p,
        )
        .unwrap();
        assert_abs_diff_eq!(ws.obstacles()[0].active_range, 1.0);
    }

    #[test]
    fn boundary_samples_lie_on_sphere() {
        for n in [2, 3, 5] {
            let c = VecN::from_element(n, 1.0);
            for q in boundary_samples(&c, 2.0, 256) {
                assert_abs_diff_eq!((&q - &c).norm(), 2.0, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn theta_decreases_with_distance(r in 0.1f64..3.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let ws = Workspace::new(
                v(&[0.0, 0.0]),
                &[ObstacleSpec::new(v(&[20.0, 0.0]), r)],
                &Params::default(),
            ).unwrap();
            let qa = v(&[20.0 + r + a, 0.0]);
            let qb = v(&[20.0 + r + b, 0.0]);
            let (ta, tb) = (ws.theta(&qa, 0).unwrap(), ws.theta(&qb, 0).unwrap());
            prop_assert_eq!(a < b, ta > tb);
        }

        #[test]
        fn exit_and_hat_partition_cone_surface(s in 0.01f64..8.0, side in prop::bool::ANY) {
            let ws = single(1.0);
            let o = v(&[0.0, 0.0]);
            let sgn = if side { 1.0 } else { -1.0 };
            let q = v(&[s * FRAC_PI_6.cos(), sgn * s * FRAC_PI_6.sin()]);
            let exit = ws.in_exit_set(&q, 0, &o);
            let hat = ws.in_hat(&q, 0, &o);
            prop_assert!(!(exit && hat));
            prop_assert_eq!(exit || hat, ws.on_cone_surface(&q, 0, &o) && ws.in_free_space(&q));
        }
    }
}
