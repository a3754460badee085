//! Synthetic range scanners, return segmentation and closed-form
//! circle/sphere reconstruction from the detected arcs.

use std::collections::VecDeque;

use thiserror::Error;

use crate::geometry::{angle_between, VecN};
use crate::world::ObstacleSpec;

/// Relative symmetry tolerance on the arc endpoints.
pub const SYMMETRY_TOL: f64 = 0.1;
/// Arc split threshold in units of the expected inter-beam spacing.
pub const SPLIT_FACTOR: f64 = 5.0;
/// Residual below which four returns count as lying on one circle.
const FIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("invalid scanner configuration: {0}")]
    BadConfig(String),
    #[error("scanner needs a {expected}D position, got {got}D")]
    Dimension { expected: usize, got: usize },
    #[error("arc with {0} points cannot be reconstructed")]
    TooFewPoints(usize),
    #[error("degenerate arc (b² = {b2} <= a² = {a2})")]
    Degenerate { b2: f64, a2: f64 },
    #[error("obstacles {i} and {j} are {gap} apart, margin needs more than {required}")]
    Separation {
        i: usize,
        j: usize,
        gap: f64,
        required: f64,
    },
}

fn check_step(name: &str, step: f64, span: f64) -> Result<usize, SensorError> {
    let count = span / step;
    if !(step > 0.0) || !step.is_finite() || (count - count.round()).abs() > 1e-9 {
        return Err(SensorError::BadConfig(format!(
            "{name} step {step}° must divide {span}°"
        )));
    }
    Ok(count.round() as usize)
}

fn check_range(range: f64) -> Result<(), SensorError> {
    if range > 0.0 && range.is_finite() {
        Ok(())
    } else {
        Err(SensorError::BadConfig(format!(
            "range {range} must be positive"
        )))
    }
}

/// Planar scanner with a full 360° field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig2D {
    /// Angular resolution in degrees.
    pub resolution: f64,
    pub range: f64,
}

impl ScanConfig2D {
    pub fn new(resolution: f64, range: f64) -> Result<Self, SensorError> {
        check_step("angular", resolution, 360.0)?;
        check_range(range)?;
        Ok(Self { resolution, range })
    }

    /// Beam angles in radians, starting at 0.
    pub fn angles(&self) -> Vec<f64> {
        let n = (360.0 / self.resolution).round() as usize;
        (0..n)
            .map(|i| (i as f64 * self.resolution).to_radians())
            .collect()
    }
}

/// Spherical scanner: polar angle from `+z` over `[0°, 180°]`, azimuth over
/// `[0°, 360°)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig3D {
    pub polar_resolution: f64,
    pub azimuth_resolution: f64,
    pub range: f64,
}

impl ScanConfig3D {
    pub fn new(
        polar_resolution: f64,
        azimuth_resolution: f64,
        range: f64,
    ) -> Result<Self, SensorError> {
        check_step("polar", polar_resolution, 180.0)?;
        check_step("azimuthal", azimuth_resolution, 360.0)?;
        check_range(range)?;
        Ok(Self {
            polar_resolution,
            azimuth_resolution,
            range,
        })
    }

    fn rows(&self) -> usize {
        (180.0 / self.polar_resolution).round() as usize + 1
    }

    fn cols(&self) -> usize {
        (360.0 / self.azimuth_resolution).round() as usize
    }
}

pub fn direction_3d(polar: f64, azimuth: f64) -> VecN {
    VecN::from_column_slice(&[
        azimuth.cos() * polar.sin(),
        azimuth.sin() * polar.sin(),
        polar.cos(),
    ])
}

/// Distance along the unit ray `x + t·dir` to the sphere `(c, r)`, if hit.
pub fn ray_sphere(x: &VecN, dir: &VecN, c: &VecN, r: f64) -> Option<f64> {
    let w = x - c;
    let b = dir.dot(&w);
    let q = w.norm_squared() - r * r;
    let mut disc = b * b - q;
    if disc < 0.0 {
        // Grazing rays lose a few ulps in `b²`.
        if disc >= -1e-12 * b.abs().max(1.0).powi(2) {
            disc = 0.0;
        } else {
            return None;
        }
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

fn cast(x: &VecN, dir: &VecN, obstacles: &[(VecN, f64)], range: f64) -> f64 {
    obstacles
        .iter()
        .filter_map(|(c, r)| ray_sphere(x, dir, c, *r))
        .fold(range, f64::min)
}

fn true_obstacles(ws: &crate::world::Workspace) -> Vec<(VecN, f64)> {
    ws.obstacles()
        .iter()
        .map(|o| (o.center.clone(), o.radius))
        .collect()
}

/// One planar scan: a range per beam angle, `range` meaning no return.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan2D {
    pub origin: VecN,
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
    pub resolution: f64,
}

impl Scan2D {
    pub fn point(&self, i: usize) -> VecN {
        let a = self.angles[i];
        let mut p = self.origin.clone();
        p[0] += self.ranges[i] * a.cos();
        p[1] += self.ranges[i] * a.sin();
        p
    }

    pub fn is_return(&self, i: usize) -> bool {
        self.ranges[i] < self.max_range
    }
}

pub fn scan_2d(
    x: &VecN,
    ws: &crate::world::Workspace,
    cfg: &ScanConfig2D,
) -> Result<Scan2D, SensorError> {
    scan_2d_among(x, &true_obstacles(ws), cfg)
}

/// Planar scan against an explicit list of `(center, radius)` circles.
pub fn scan_2d_among(
    x: &VecN,
    obstacles: &[(VecN, f64)],
    cfg: &ScanConfig2D,
) -> Result<Scan2D, SensorError> {
    if x.len() != 2 {
        return Err(SensorError::Dimension {
            expected: 2,
            got: x.len(),
        });
    }
    let angles = cfg.angles();
    let ranges = angles
        .iter()
        .map(|a| {
            let dir = VecN::from_column_slice(&[a.cos(), a.sin()]);
            cast(x, &dir, obstacles, cfg.range)
        })
        .collect();
    Ok(Scan2D {
        origin: x.clone(),
        angles,
        ranges,
        max_range: cfg.range,
        resolution: cfg.resolution.to_radians(),
    })
}

/// One spherical scan. Row 0 and the last row are the poles and hold a
/// single beam each; the other rows hold one beam per azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan3D {
    pub origin: VecN,
    pub polar: Vec<f64>,
    pub azimuth: Vec<f64>,
    pub ranges: Vec<Vec<f64>>,
    pub max_range: f64,
}

impl Scan3D {
    pub fn direction(&self, row: usize, col: usize) -> VecN {
        direction_3d(self.polar[row], self.azimuth[col])
    }

    pub fn point(&self, row: usize, col: usize) -> VecN {
        &self.origin + self.direction(row, col) * self.ranges[row][col]
    }

    pub fn is_return(&self, row: usize, col: usize) -> bool {
        self.ranges[row][col] < self.max_range
    }

    fn is_pole(&self, row: usize) -> bool {
        row == 0 || row + 1 == self.polar.len()
    }

    /// Grid neighbours of a beam; the azimuth wraps and each pole touches
    /// every beam of the adjacent row.
    fn neighbours(&self, row: usize, col: usize) -> Vec<(usize, usize)> {
        let rows = self.polar.len();
        let cols = self.azimuth.len();
        let mut out = Vec::new();
        if self.is_pole(row) {
            let next = if row == 0 { 1 } else { rows - 2 };
            out.extend((0..cols).map(|c| (next, c)));
            return out;
        }
        let pole_col = |r: usize| if self.is_pole(r) { 0 } else { col };
        out.push((row - 1, pole_col(row - 1)));
        out.push((row + 1, pole_col(row + 1)));
        out.push((row, (col + 1) % cols));
        out.push((row, (col + cols - 1) % cols));
        out
    }
}

pub fn scan_3d(
    x: &VecN,
    ws: &crate::world::Workspace,
    cfg: &ScanConfig3D,
) -> Result<Scan3D, SensorError> {
    scan_3d_among(x, &true_obstacles(ws), cfg)
}

pub fn scan_3d_among(
    x: &VecN,
    obstacles: &[(VecN, f64)],
    cfg: &ScanConfig3D,
) -> Result<Scan3D, SensorError> {
    if x.len() != 3 {
        return Err(SensorError::Dimension {
            expected: 3,
            got: x.len(),
        });
    }
    let polar: Vec<f64> = (0..cfg.rows())
        .map(|i| (i as f64 * cfg.polar_resolution).to_radians())
        .collect();
    let azimuth: Vec<f64> = (0..cfg.cols())
        .map(|i| (i as f64 * cfg.azimuth_resolution).to_radians())
        .collect();
    let last = polar.len() - 1;
    let ranges = polar
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let cols = if i == 0 || i == last {
                1
            } else {
                azimuth.len()
            };
            (0..cols)
                .map(|j| cast(x, &direction_3d(p, azimuth[j]), obstacles, cfg.range))
                .collect()
        })
        .collect();
    Ok(Scan3D {
        origin: x.clone(),
        polar,
        azimuth,
        ranges,
        max_range: cfg.range,
    })
}

/// Base circle of a spherical cap.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCircle {
    pub center: VecN,
    pub radius: f64,
    /// Unit normal, pointing away from the scanner.
    pub normal: VecN,
}

/// A group of returns attributed to one obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedArc {
    /// Returns in scan order.
    pub points: Vec<VecN>,
    pub c_plus: VecN,
    pub c_minus: VecN,
    /// Return nearest to the scanner.
    pub projection: VecN,
    pub symmetric: bool,
    /// Angular beam spacing in radians.
    pub resolution: f64,
    /// Set for spherical caps only.
    pub base: Option<BaseCircle>,
}

fn nearest_point(x: &VecN, points: &[VecN]) -> VecN {
    points
        .iter()
        .min_by(|a, b| (*a - x).norm().total_cmp(&(*b - x).norm()))
        .cloned()
        .unwrap_or_else(|| x.clone())
}

/// Center and squared radius of the circle through three points, if they
/// are not collinear.
fn circumcircle(a: &VecN, b: &VecN, c: &VecN) -> Option<(VecN, f64)> {
    let u = b - a;
    let v = c - a;
    let (uu, uv, vv) = (u.dot(&u), u.dot(&v), v.dot(&v));
    let det = uu * vv - uv * uv;
    if det <= 1e-14 * uu * vv {
        return None;
    }
    let s = (0.5 * uu * vv - 0.5 * vv * uv) / det;
    let t = (0.5 * vv * uu - 0.5 * uu * uv) / det;
    let center = a + u * s + v * t;
    let r2 = (a - &center).norm_squared();
    Some((center, r2))
}

/// Whether four points lie on one circle (or one line).
fn concyclic(p: &[VecN]) -> bool {
    let scale = p
        .iter()
        .skip(1)
        .map(|q| (q - &p[0]).norm())
        .fold(0.0, f64::max)
        .max(1e-12);
    match circumcircle(&p[0], &p[1], &p[2]) {
        Some((c, r2)) => {
            let r = r2.sqrt();
            let u = &p[1] - &p[0];
            let v = &p[2] - &p[0];
            let w = &p[3] - &p[0];
            let off_plane = plane_residual(&u, &v, &w);
            ((&p[3] - &c).norm() - r).abs() <= FIT_TOL * scale.max(r.min(1e3 * scale))
                && off_plane <= FIT_TOL * scale
        }
        None => {
            let d = &p[2] - &p[0];
            let w = &p[3] - &p[0];
            let along = w.dot(&d) / d.norm_squared();
            (w - d * along).norm() <= FIT_TOL * scale
        }
    }
}

/// Distance of `w` from `span(u, v)`.
fn plane_residual(u: &VecN, v: &VecN, w: &VecN) -> f64 {
    let e1 = u / u.norm();
    let v2 = v - &e1 * e1.dot(v);
    let e2 = &v2 / v2.norm();
    (w - &e1 * e1.dot(w) - &e2 * e2.dot(w)).norm()
}

/// Whether adjacent returns `a`, `b` (ranges `ra`, `rb`) belong to one
/// surface. `window` yields the runs of four consecutive returns that
/// contain both; any concyclic run keeps the pair together.
fn joined(ra: f64, rb: f64, step: f64, windows: &[Vec<VecN>]) -> bool {
    let split = SPLIT_FACTOR * ra.max(rb) * step;
    (ra - rb).abs() <= split || windows.iter().any(|w| concyclic(w))
}

/// Groups the returns of a planar scan into arcs. Arcs wrap around the
/// scan start when the first and last beams both return.
pub fn segment_returns(scan: &Scan2D) -> Vec<DetectedArc> {
    let n = scan.ranges.len();
    let hits: Vec<bool> = (0..n).map(|i| scan.is_return(i)).collect();
    if !hits.iter().any(|&h| h) {
        return Vec::new();
    }
    let points: Vec<VecN> = (0..n).map(|i| scan.point(i)).collect();
    let at = |i: isize| -> usize { i.rem_euclid(n as isize) as usize };
    let link = |i: usize| -> bool {
        // Link between beam i and beam i + 1.
        let j = at(i as isize + 1);
        if !(hits[i] && hits[j]) {
            return false;
        }
        let mut windows = Vec::new();
        for s in -2..=0isize {
            let idx: Vec<usize> = (0..4).map(|o| at(i as isize + s + o)).collect();
            if idx.iter().all(|&q| hits[q]) && n >= 4 {
                windows.push(idx.iter().map(|&q| points[q].clone()).collect());
            }
        }
        joined(scan.ranges[i], scan.ranges[j], scan.resolution, &windows)
    };
    let links: Vec<bool> = (0..n).map(link).collect();
    // Start right after a break so no arc straddles the origin of the loop.
    let Some(start) = (0..n).find(|&i| !links[i]).map(|i| at(i as isize + 1)) else {
        // One closed ring of returns: the scanner is enclosed.
        let all: Vec<usize> = (0..n).collect();
        return vec![make_arc(
            &scan.origin,
            all.iter().map(|&i| points[i].clone()).collect(),
            scan.resolution,
        )];
    };
    let mut arcs = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for o in 0..n {
        let i = at((start + o) as isize);
        if hits[i] {
            current.push(i);
        }
        if !links[i] && !current.is_empty() {
            arcs.push(make_arc(
                &scan.origin,
                current.iter().map(|&q| points[q].clone()).collect(),
                scan.resolution,
            ));
            current.clear();
        }
    }
    arcs
}

fn make_arc(x: &VecN, points: Vec<VecN>, resolution: f64) -> DetectedArc {
    let c_plus = points[0].clone();
    let c_minus = points[points.len() - 1].clone();
    let projection = nearest_point(x, &points);
    let mut arc = DetectedArc {
        points,
        c_plus,
        c_minus,
        projection,
        symmetric: false,
        resolution,
        base: None,
    };
    arc.symmetric = symmetry_test(&arc, x);
    arc
}

/// Symmetry filter. Planar arcs compare the endpoint distances to the
/// projection; caps compare the base-circle center with the scanner axis.
pub fn symmetry_test(arc: &DetectedArc, x: &VecN) -> bool {
    if arc.points.len() < 3 {
        return false;
    }
    match &arc.base {
        None => {
            let dp = (&arc.c_plus - &arc.projection).norm();
            let dm = (&arc.c_minus - &arc.projection).norm();
            if (dp - dm).abs() <= SYMMETRY_TOL * dp.max(dm) {
                return true;
            }
            // Near the silhouette one beam moves the endpoint a long way, so
            // an imbalance of a single beam still counts as symmetric.
            let to = |p: &VecN| p - x;
            let axis = to(&arc.projection);
            let (Ok(ap), Ok(am)) = (
                angle_between(&axis, &to(&arc.c_plus)),
                angle_between(&axis, &to(&arc.c_minus)),
            ) else {
                return false;
            };
            ap.min(am) > 0.0 && (ap - am).abs() <= 1.5 * arc.resolution
        }
        Some(base) => {
            if !(base.radius > 0.0) {
                return false;
            }
            let axis = &arc.projection - x;
            let n = axis.norm();
            if n == 0.0 {
                return false;
            }
            let a = axis / n;
            let w = &base.center - x;
            let off = (&w - &a * a.dot(&w)).norm();
            off <= SYMMETRY_TOL * base.radius
        }
    }
}

/// Groups the returns of a spherical scan into caps by grid connectivity.
pub fn segment_returns_3d(scan: &Scan3D) -> Vec<DetectedArc> {
    let rows = scan.polar.len();
    let step = scan.polar[1] - scan.polar[0];
    let az_step = if scan.azimuth.len() > 1 {
        scan.azimuth[1] - scan.azimuth[0]
    } else {
        std::f64::consts::TAU
    };
    let mut label: Vec<Vec<Option<usize>>> =
        scan.ranges.iter().map(|r| vec![None; r.len()]).collect();
    let mut caps = Vec::new();

    // Four consecutive returns along one meridian (including the pair).
    let column_windows = |r0: usize, r1: usize, col: usize| -> Vec<Vec<VecN>> {
        let lo = r0.min(r1);
        let mut out = Vec::new();
        for s in 0..3usize {
            if lo < s {
                continue;
            }
            let first = lo - s;
            if first + 3 >= rows {
                continue;
            }
            let cells: Vec<(usize, usize)> = (first..first + 4)
                .map(|r| (r, if scan.is_pole(r) { 0 } else { col }))
                .collect();
            if cells.iter().all(|&(r, c)| scan.is_return(r, c)) {
                out.push(cells.iter().map(|&(r, c)| scan.point(r, c)).collect());
            }
        }
        out
    };

    for r in 0..rows {
        for c in 0..scan.ranges[r].len() {
            if label[r][c].is_some() || !scan.is_return(r, c) {
                continue;
            }
            let id = caps.len();
            let mut cells = Vec::new();
            let mut queue = VecDeque::from([(r, c)]);
            label[r][c] = Some(id);
            while let Some((pr, pc)) = queue.pop_front() {
                cells.push((pr, pc));
                for (nr, nc) in scan.neighbours(pr, pc) {
                    if label[nr][nc].is_some() || !scan.is_return(nr, nc) {
                        continue;
                    }
                    let meridian = nr != pr;
                    let windows = if meridian {
                        let col = if scan.is_pole(pr) { nc } else { pc };
                        column_windows(pr, nr, col)
                    } else {
                        Vec::new()
                    };
                    let s = if meridian {
                        step
                    } else {
                        az_step * scan.polar[pr].sin()
                    };
                    if joined(scan.ranges[pr][pc], scan.ranges[nr][nc], s, &windows) {
                        label[nr][nc] = Some(id);
                        queue.push_back((nr, nc));
                    }
                }
            }
            cells.sort_unstable();
            caps.push(cells);
        }
    }

    caps.into_iter()
        .enumerate()
        .map(|(id, cells)| {
            let boundary: Vec<VecN> = cells
                .iter()
                .filter(|&&(r, c)| {
                    scan.neighbours(r, c)
                        .iter()
                        .any(|&(nr, nc)| label[nr][nc] != Some(id))
                })
                .map(|&(r, c)| scan.point(r, c))
                .collect();
            let points: Vec<VecN> = cells.iter().map(|&(r, c)| scan.point(r, c)).collect();
            make_cap(&scan.origin, points, &boundary)
        })
        .collect()
}

/// Builds a cap from its returns and the returns on its grid boundary.
pub fn make_cap(x: &VecN, points: Vec<VecN>, boundary: &[VecN]) -> DetectedArc {
    let projection = nearest_point(x, &points);
    let base = base_circle(x, &projection, boundary);
    let c_plus = boundary
        .first()
        .cloned()
        .unwrap_or_else(|| projection.clone());
    let c_minus = boundary
        .last()
        .cloned()
        .unwrap_or_else(|| projection.clone());
    let mut arc = DetectedArc {
        points,
        c_plus,
        c_minus,
        projection,
        symmetric: false,
        resolution: 0.0,
        base: Some(base),
    };
    arc.symmetric = symmetry_test(&arc, x);
    arc
}

/// Largest angular share, in radians, one boundary return may carry.
const MAX_BASE_GAP: f64 = 10.0 * std::f64::consts::PI / 180.0;

/// Base circle of a cap. The beam grid samples the boundary unevenly (densely
/// near the scanner poles), so each boundary return is weighted by the angle
/// it covers around the viewing axis. Center
/// and radius are the weighted mean position and the weighted mean distance
/// to the line from the scanner through that center.
fn base_circle(x: &VecN, projection: &VecN, boundary: &[VecN]) -> BaseCircle {
    if boundary.is_empty() {
        return BaseCircle {
            center: projection.clone(),
            radius: 0.0,
            normal: unit_or_zero(projection - x),
        };
    }
    let mut center = projection.clone();
    let mut weights = vec![1.0 / boundary.len() as f64; boundary.len()];
    // The second pass bins around the axis found by the first.
    for _ in 0..2 {
        weights = angular_weights(&unit_or_zero(&center - x), x, boundary);
        center = VecN::zeros(x.len());
        for (p, w) in boundary.iter().zip(&weights) {
            center += p * *w;
        }
    }
    let normal = unit_or_zero(&center - x);
    let radius = boundary
        .iter()
        .zip(&weights)
        .map(|(p, w)| {
            let d = p - &center;
            w * (&d - &normal * normal.dot(&d)).norm()
        })
        .sum::<f64>();
    BaseCircle {
        center,
        radius,
        normal,
    }
}

/// Weights summing to one, proportional to half the angle between each
/// point's neighbours around `axis` (through `x`), each share capped at
/// `MAX_BASE_GAP`.
fn angular_weights(axis: &VecN, x: &VecN, points: &[VecN]) -> Vec<f64> {
    let n = points.len();
    let uniform = vec![1.0 / n as f64; n];
    let Some((e1, e2)) = plane_basis(axis) else {
        return uniform;
    };
    if n < 3 {
        return uniform;
    }
    let angle: Vec<f64> = points
        .iter()
        .map(|p| {
            let w = p - x;
            w.dot(&e2).atan2(w.dot(&e1))
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| angle[a].total_cmp(&angle[b]));
    let gap = |from: usize, to: usize| {
        (angle[order[to]] - angle[order[from]]).rem_euclid(std::f64::consts::TAU)
    };
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        let share = 0.5 * (gap(prev, i).min(MAX_BASE_GAP) + gap(i, next).min(MAX_BASE_GAP));
        weights[order[i]] = share;
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return uniform;
    }
    weights.iter().map(|w| w / total).collect()
}

/// Two orthonormal vectors perpendicular to the unit vector `axis`, for
/// spatial scans.
fn plane_basis(axis: &VecN) -> Option<(VecN, VecN)> {
    if axis.len() != 3 || axis.norm() == 0.0 {
        return None;
    }
    let a = nalgebra::Vector3::new(axis[0], axis[1], axis[2]);
    let seed = if a.x.abs() < 0.9 {
        nalgebra::Vector3::x()
    } else {
        nalgebra::Vector3::y()
    };
    let e1 = a.cross(&seed).normalize();
    let e2 = a.cross(&e1);
    Some((
        VecN::from_column_slice(e1.as_slice()),
        VecN::from_column_slice(e2.as_slice()),
    ))
}

fn unit_or_zero(v: VecN) -> VecN {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// `r = b² / (2 √(b² − a²))`, failing when the arc has no depth.
fn chord_sagitta(a: f64, b: f64) -> Result<f64, SensorError> {
    let (a2, b2) = (a * a, b * b);
    if !(b2 > a2 * (1.0 + 1e-12)) {
        return Err(SensorError::Degenerate { b2, a2 });
    }
    Ok(b2 / (2.0 * (b2 - a2).sqrt()))
}

/// Center at depth `radius` behind the projection. The direction is taken
/// from the projection to the chord midpoint, which is the scanner ray when
/// the projection is the exact nearest point and stays right when beam
/// quantization moves the projection sideways. Passing the projection itself
/// falls back to the scanner ray.
fn extrapolate(x: &VecN, projection: &VecN, chord_mid: &VecN, radius: f64) -> VecN {
    let mut dir = chord_mid - projection;
    if !(dir.norm() > 0.0) {
        dir = projection - x;
    }
    projection + &dir * (radius / dir.norm())
}

/// Circle from a planar arc, with `a` the half-chord and `b` the distance
/// from the projection to the chord ends. The longer side is cut back by
/// interpolation so both ends sit at the same distance from the projection.
pub fn reconstruct_2d(arc: &DetectedArc, x: &VecN) -> Result<(VecN, f64), SensorError> {
    let n = arc.points.len();
    if n < 3 {
        return Err(SensorError::TooFewPoints(n));
    }
    let p = arc
        .points
        .iter()
        .position(|q| *q == arc.projection)
        .unwrap_or(0);
    let left: Vec<&VecN> = arc.points[..=p].iter().rev().collect();
    let right: Vec<&VecN> = arc.points[p..].iter().collect();
    let reach = |side: &[&VecN]| (*side.last().unwrap() - &arc.projection).norm();
    let (short, long) = if reach(&left) <= reach(&right) {
        (left, right)
    } else {
        (right, left)
    };
    let b = reach(&short);
    let end = short.last().unwrap();
    let cut = cut_at(&long, &arc.projection, b);
    let a = 0.5 * (*end - &cut).norm();
    let r = chord_sagitta(a, b)?;
    let mid = (*end + &cut) * 0.5;
    Ok((extrapolate(x, &arc.projection, &mid, r), r))
}

/// Point on the polyline `side` (starting at `from`) at distance `b` from
/// `from`, by linear interpolation.
fn cut_at(side: &[&VecN], from: &VecN, b: f64) -> VecN {
    for w in side.windows(2) {
        let d0 = (w[0] - from).norm();
        let d1 = (w[1] - from).norm();
        if d1 >= b {
            let s = if d1 > d0 { (b - d0) / (d1 - d0) } else { 1.0 };
            return w[0] + (w[1] - w[0]) * s.clamp(0.0, 1.0);
        }
    }
    (*side.last().unwrap()).clone()
}

/// Sphere from a cap, with `a` the base-circle radius and `b` the distance
/// from the projection to the base circle.
pub fn reconstruct_3d(arc: &DetectedArc, x: &VecN) -> Result<(VecN, f64), SensorError> {
    if arc.points.len() < 3 {
        return Err(SensorError::TooFewPoints(arc.points.len()));
    }
    let base = arc.base.as_ref().ok_or(SensorError::TooFewPoints(0))?;
    let a = base.radius;
    let sag = base.normal.dot(&(&base.center - &arc.projection));
    let b = (a * a + sag * sag).sqrt();
    let r = chord_sagitta(a, b)?;
    Ok((extrapolate(x, &arc.projection, &arc.projection, r), r))
}

/// Dilates every reconstructed obstacle by `e_s`, after checking that the
/// margin keeps them disjoint. The result carries no explicit active range,
/// so the workspace derives it against both `r̂_k` and the sensor range.
pub fn apply_margin_and_range(
    obstacles: &[(VecN, f64)],
    e_s: f64,
) -> Result<Vec<ObstacleSpec>, SensorError> {
    if !(e_s >= 0.0) {
        return Err(SensorError::BadConfig(format!(
            "margin {e_s} must be nonnegative"
        )));
    }
    for i in 0..obstacles.len() {
        for j in i + 1..obstacles.len() {
            let (ci, ri) = &obstacles[i];
            let (cj, rj) = &obstacles[j];
            let gap = (ci - cj).norm() - ri - rj;
            if !(gap > 2.0 * e_s) {
                return Err(SensorError::Separation {
                    i,
                    j,
                    gap,
                    required: 2.0 * e_s,
                });
            }
        }
    }
    Ok(obstacles
        .iter()
        .map(|(c, r)| ObstacleSpec::new(c.clone(), r + e_s))
        .collect())
}

/// Obstacles reconstructed from one scan, asymmetric and failed arcs
/// dropped. Obstacles are disjoint, so a reconstruction overlapping one
/// built from more returns is a fragment of the same obstacle and is
/// dropped too.
pub fn perceive(arcs: &[DetectedArc], x: &VecN) -> Vec<(VecN, f64)> {
    let mut found: Vec<(usize, VecN, f64)> = arcs
        .iter()
        .filter(|a| a.symmetric)
        .filter_map(|a| {
            let rec = if a.base.is_some() {
                reconstruct_3d(a, x)
            } else {
                reconstruct_2d(a, x)
            };
            rec.ok().map(|(c, r)| (a.points.len(), c, r))
        })
        .collect();
    // stable: ties keep scan order
    found.sort_by(|a, b| b.0.cmp(&a.0));
    let mut kept: Vec<(VecN, f64)> = Vec::new();
    for (_, c, r) in found {
        if kept.iter().all(|(kc, kr)| (&c - kc).norm() > r + kr) {
            kept.push((c, r));
        }
    }
    kept
}

/// A reconstructed obstacle with an identity that persists across scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    pub center: VecN,
    pub radius: f64,
}

/// Associates reconstructions across scan cycles by nearest center.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    tracks: Vec<Track>,
    next_id: usize,
}

impl Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Replaces the track set with this cycle's reconstructions. A
    /// reconstruction inherits the id of the nearest previous track when the
    /// centers are within half its radius. The track `keep`, if missing from
    /// the scan, survives with its last estimate.
    pub fn update(&mut self, detected: &[(VecN, f64)], keep: Option<usize>) -> &[Track] {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, (c, r)) in detected.iter().enumerate() {
            for (t, track) in self.tracks.iter().enumerate() {
                let d = (c - &track.center).norm();
                if d <= 0.5 * r {
                    pairs.push((d, i, t));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut det_id: Vec<Option<usize>> = vec![None; detected.len()];
        let mut used = vec![false; self.tracks.len()];
        for (_, i, t) in pairs {
            if det_id[i].is_none() && !used[t] {
                det_id[i] = Some(self.tracks[t].id);
                used[t] = true;
            }
        }
        let mut next: Vec<Track> = detected
            .iter()
            .zip(det_id)
            .map(|((c, r), id)| {
                let id = id.unwrap_or_else(|| {
                    self.next_id += 1;
                    self.next_id - 1
                });
                Track {
                    id,
                    center: c.clone(),
                    radius: *r,
                }
            })
            .collect();
        if let Some(k) = keep {
            if !next.iter().any(|t| t.id == k) {
                if let Some(old) = self.tracks.iter().find(|t| t.id == k) {
                    next.push(old.clone());
                }
            }
        }
        next.sort_by_key(|t| t.id);
        self.tracks = next;
        &self.tracks
    }
}
