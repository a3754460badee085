//! Hybrid control law: virtual destinations, the avoidance vector field,
//! smoothing functions, flow/jump set membership and the jump maps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_or_zero, cone_sides, line_distance, reflect, segment_hits_ball, GeometryError, PlaneSpan,
    Relation, VecN, TAU_CONE,
};
use crate::world::{aperture_from_psi, ShadowGeometry, Workspace, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("state coincides with virtual destination {m:?} of obstacle {k}")]
    AtVirtualDestination { k: usize, m: Mode },
    #[error(
        "virtual-destination distance {e} exceeds the half-space bound {bound} for obstacle {k}"
    )]
    VdDistanceTooLarge { k: usize, e: f64, bound: f64 },
    #[error("degenerate virtual destinations for obstacle {k} (axis angle {psi})")]
    DegenerateVirtualDestinations { k: usize, psi: f64 },
    #[error("no virtual destinations selected for obstacle {0}")]
    MissingVirtualDestinations(usize),
    #[error("state is not in the jump set")]
    NotInJumpSet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Operation mode: motion-to-destination (`Zero`) or avoidance toward one of
/// the two virtual destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Neg,
    Zero,
    Pos,
}

impl Mode {
    pub fn value(self) -> i8 {
        match self {
            Mode::Neg => -1,
            Mode::Zero => 0,
            Mode::Pos => 1,
        }
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Mode::Neg),
            0 => Some(Mode::Zero),
            1 => Some(Mode::Pos),
            _ => None,
        }
    }

    pub fn is_avoidance(self) -> bool {
        self != Mode::Zero
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub x: VecN,
    pub k: usize,
    pub m: Mode,
    pub t: f64,
    pub j: u64,
}

/// Jump map of the mode selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeMap {
    /// Only switches obstacle on entry into another obstacle's active region.
    #[default]
    ZenoFree,
    Original,
}

/// Mode choice on activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    /// Resolves the hysteresis region by the nearest virtual destination.
    #[default]
    Continuity,
    Original,
}

/// Plane holding the virtual destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VdPlane {
    /// Plane through the target, the obstacle center and the entry point.
    #[default]
    Entry,
    /// Always the fallback plane, regardless of the entry point.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControllerConfig {
    pub mode_map: ModeMap,
    pub mode_choice: ModeChoice,
    pub vd_plane: VdPlane,
}

/// The pair of virtual destinations of one obstacle and everything derived
/// from them.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualDestinations {
    pub k: usize,
    pub x1: VecN,
    pub x_neg1: VecN,
    pub e: f64,
    pub v1: VecN,
    pub v_neg1: VecN,
    pub aperture: f64,
    pub plane: PlaneSpan,
    pub entry: VecN,
    shadow1: ShadowGeometry,
    shadow_neg1: ShadowGeometry,
}

impl VirtualDestinations {
    pub fn point(&self, m: Mode) -> &VecN {
        match m {
            Mode::Neg => &self.x_neg1,
            _ => &self.x1,
        }
    }

    pub fn axis(&self, m: Mode) -> &VecN {
        match m {
            Mode::Neg => &self.v_neg1,
            _ => &self.v1,
        }
    }

    pub(crate) fn shadow(&self, m: Mode) -> &ShadowGeometry {
        match m {
            Mode::Neg => &self.shadow_neg1,
            _ => &self.shadow1,
        }
    }

    /// Signed side of `x` with respect to `P(c_k, x^{-1} - x^1)`.
    pub fn hyperplane_side(&self, x: &VecN) -> f64 {
        (&self.x_neg1 - &self.x1).dot(&(x - &self.shadow1.center))
    }
}

/// Evaluates the control law and the hybrid data over one workspace.
#[derive(Debug, Clone, Copy)]
pub struct Controller<'a> {
    ws: &'a Workspace,
    cfg: ControllerConfig,
}

impl<'a> Controller<'a> {
    pub fn new(ws: &'a Workspace, cfg: ControllerConfig) -> Self {
        Self { ws, cfg }
    }

    pub fn workspace(&self) -> &'a Workspace {
        self.ws
    }

    pub fn config(&self) -> ControllerConfig {
        self.cfg
    }

    /// `u_d(x) = -γ (x - x_d)`.
    pub fn nominal_control(&self, x: &VecN) -> VecN {
        (x - self.ws.target()) * (-self.ws.gamma())
    }

    pub fn select_virtual_destinations(
        &self,
        k: usize,
        entry: &VecN,
    ) -> Result<VirtualDestinations, ControlError> {
        let e = self.ws.obstacle(k)?.vd_distance;
        self.select_virtual_destinations_with(k, entry, e)
    }

    /// Virtual destinations at an explicit distance `e` from the target.
    pub fn select_virtual_destinations_with(
        &self,
        k: usize,
        entry: &VecN,
        e: f64,
    ) -> Result<VirtualDestinations, ControlError> {
        let o = self.ws.obstacle(k)?;
        let xd = self.ws.target();
        let c = &o.center;
        let axis = c - xd;
        let d = axis.norm();
        let a = &axis / d;
        let sin_t = (o.radius / d).min(1.0);
        let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
        let bound = (d - o.radius) / cos_t;
        if !(e > 0.0) || e > bound * (1.0 + 1e-12) {
            return Err(ControlError::VdDistanceTooLarge { k, e, bound });
        }

        let off_line = line_distance(xd, c, entry) > 1e-9 * (1.0 + d);
        let y = if off_line && self.cfg.vd_plane == VdPlane::Entry {
            entry.clone()
        } else {
            fallback_point(xd, &a)
        };
        let r = &y - xd;
        let perp = &r - &a * a.dot(&r);
        let w = &perp / perp.norm();

        let x1 = xd + (&a * cos_t + &w * sin_t) * e;
        let x_neg1 = xd - reflect(&a, &(&x1 - xd))?;
        let plane = PlaneSpan::through(xd, c, &y)?;
        let v1 = c - &x1;
        let v_neg1 = c - &x_neg1;
        let psi = angle_or_zero(&v1, &v_neg1);
        if !(psi > 0.0 && psi < std::f64::consts::PI) {
            return Err(ControlError::DegenerateVirtualDestinations { k, psi });
        }
        let reach = o.radius + o.active_range;
        Ok(VirtualDestinations {
            k,
            shadow1: ShadowGeometry::new(&x1, c, o.radius, reach),
            shadow_neg1: ShadowGeometry::new(&x_neg1, c, o.radius, reach),
            x1,
            x_neg1,
            e,
            v1,
            v_neg1,
            aperture: aperture_from_psi(psi, self.ws.aperture_factor()),
            plane,
            entry: entry.clone(),
        })
    }

    /// Aperture bound `min(ψ/2, (π - ψ)/2)` scaled by the safety factor.
    pub fn aperture(&self, vd: &VirtualDestinations) -> f64 {
        vd.aperture
    }

    pub fn kappa_bar(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> VecN {
        (vd.point(m) - x) * self.ws.gamma()
    }

    pub fn beta(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> Result<f64, ControlError> {
        let kb = self.kappa_bar(x, vd, m);
        if kb.norm() == 0.0 {
            return Err(ControlError::AtVirtualDestination { k: vd.k, m });
        }
        Ok(angle_or_zero(&(&self.ws.obstacles()[vd.k].center - x), &kb))
    }

    pub fn tau(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> Result<f64, ControlError> {
        let beta = self.beta(x, vd, m)?;
        let theta = self.ws.theta_clamped(x, vd.k);
        Ok(self.kappa_bar(x, vd, m).norm() * (theta - beta).sin() / theta.sin())
    }

    pub fn kappa(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> Result<VecN, ControlError> {
        let c = &self.ws.obstacles()[vd.k].center;
        let kb = self.kappa_bar(x, vd, m);
        let nkb = kb.norm();
        if nkb == 0.0 {
            return Err(ControlError::AtVirtualDestination { k: vd.k, m });
        }
        let cx = c - x;
        let beta = angle_or_zero(&cx, &kb);
        let theta = self.ws.theta_clamped(x, vd.k);
        let tau = nkb * (theta - beta).sin() / theta.sin();
        let ncx = cx.norm();
        Ok(kb - cx * (tau / ncx))
    }

    pub fn mu(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> Result<f64, ControlError> {
        let dist = (x - vd.point(m)).norm();
        if dist == 0.0 {
            return Err(ControlError::AtVirtualDestination { k: vd.k, m });
        }
        let beta = self.beta(x, vd, m)?;
        let theta = self.ws.theta_clamped(x, vd.k);
        Ok(1.0 + vd.e / dist * beta / theta)
    }

    pub fn alpha(&self, x: &VecN, k: usize) -> f64 {
        let o = &self.ws.obstacles()[k];
        let d = self.ws.distance_to(x, k);
        let eps = self.ws.epsilon();
        if d < o.active_range - eps {
            1.0
        } else if d <= o.active_range {
            (o.active_range - d) / eps
        } else {
            0.0
        }
    }

    /// `u = m² α μ κ + (1 - m² α) u_d`.
    pub fn control(
        &self,
        x: &VecN,
        m: Mode,
        vd: Option<&VirtualDestinations>,
    ) -> Result<VecN, ControlError> {
        let ud = self.nominal_control(x);
        if m == Mode::Zero {
            return Ok(ud);
        }
        let vd = vd.ok_or(ControlError::MissingVirtualDestinations(usize::MAX))?;
        let a = self.alpha(x, vd.k);
        if a == 0.0 {
            return Ok(ud);
        }
        let kappa = self.kappa(x, vd, m)?;
        let mu = self.mu(x, vd, m)?;
        Ok(kappa * (a * mu) + ud * (1.0 - a))
    }

    // ---- flow and jump sets ----

    pub fn in_f0(&self, x: &VecN) -> bool {
        (0..self.ws.len()).all(|k| self.in_fk0(x, k))
    }

    pub fn in_j0(&self, x: &VecN) -> bool {
        (0..self.ws.len()).any(|k| self.in_jk0(x, k))
    }

    pub fn in_fk0(&self, x: &VecN, k: usize) -> bool {
        self.ws.in_free_space(x) && !self.ws.target_shadow(k).slack(x).interior(TAU_CONE)
    }

    pub fn in_jk0(&self, x: &VecN, k: usize) -> bool {
        self.ws.in_free_space(x) && self.ws.target_shadow(k).slack(x).closed(TAU_CONE)
    }

    pub fn in_fkm(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> bool {
        self.ws.in_free_space(x) && self.flow_slack_ok(x, vd, m, TAU_CONE)
    }

    pub fn in_jkm(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> bool {
        self.ws.in_free_space(x) && !self.flow_interior(x, vd, m, TAU_CONE)
    }

    /// `x ∈ A_k(x^m) \ C<(c_k, v^m, φ)` at tolerance `tol`, free-space
    /// membership assumed.
    pub(crate) fn flow_slack_ok(
        &self,
        x: &VecN,
        vd: &VirtualDestinations,
        m: Mode,
        tol: f64,
    ) -> bool {
        vd.shadow(m).slack(x).closed(tol) && self.exclusion(x, vd, m, Relation::Ge, tol)
    }

    pub(crate) fn flow_interior(
        &self,
        x: &VecN,
        vd: &VirtualDestinations,
        m: Mode,
        tol: f64,
    ) -> bool {
        vd.shadow(m).slack(x).interior(tol) && self.exclusion(x, vd, m, Relation::Gt, tol)
    }

    fn exclusion(
        &self,
        x: &VecN,
        vd: &VirtualDestinations,
        m: Mode,
        rel: Relation,
        tol: f64,
    ) -> bool {
        let c = &self.ws.obstacles()[vd.k].center;
        let v = vd.axis(m);
        let (lhs, rhs) = cone_sides(c, v, v.norm(), vd.aperture.cos(), x);
        rel.holds(lhs, rhs, tol)
    }

    /// Whether `x` lies in the closed exclusion cone `C≥(c_k, v^m, φ)`
    /// complement, i.e. outside the open cone around `v^m`.
    fn outside_cone(&self, x: &VecN, vd: &VirtualDestinations, m: Mode) -> bool {
        self.exclusion(x, vd, m, Relation::Ge, TAU_CONE)
    }

    /// Mode chosen on activation of obstacle `vd.k` at `x`.
    pub fn choose_mode(&self, x: &VecN, vd: &VirtualDestinations) -> Mode {
        let in1 = self.outside_cone(x, vd, Mode::Pos);
        let in_neg = self.outside_cone(x, vd, Mode::Neg);
        match (in1, in_neg) {
            (true, false) => Mode::Pos,
            (false, true) => Mode::Neg,
            _ => match self.cfg.mode_choice {
                ModeChoice::Original => Mode::Pos,
                ModeChoice::Continuity => {
                    if vd.hyperplane_side(x) > TAU_CONE {
                        Mode::Neg
                    } else {
                        Mode::Pos
                    }
                }
            },
        }
    }

    /// Obstacles whose target active region contains `x`, nearest first.
    /// `interior` selects the open region, otherwise the closed one.
    pub fn active_candidates(&self, x: &VecN, interior: bool, tol: f64) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.ws.len())
            .filter(|&k| {
                let s = self.ws.target_shadow(k).slack(x);
                if interior {
                    s.interior(tol)
                } else {
                    s.closed(tol)
                }
            })
            .collect();
        out.sort_by(|&a, &b| {
            self.ws
                .distance_to(x, a)
                .total_cmp(&self.ws.distance_to(x, b))
                .then(a.cmp(&b))
        });
        out
    }

    /// Activates avoidance of obstacle `k` at `x`: selects the virtual
    /// destinations and the mode.
    pub fn activate(
        &self,
        x: &VecN,
        k: usize,
    ) -> Result<(Mode, VirtualDestinations), ControlError> {
        let vd = self.select_virtual_destinations(k, x)?;
        Ok((self.choose_mode(x, &vd), vd))
    }

    /// Applies the configured jump map to `state`. `vds` is the per-obstacle
    /// cache of virtual destinations, updated on activation. With
    /// `pending_initial` the current index may be re-selected.
    ///
    /// Returns the successor, equal to `state` when the map is the identity.
    pub fn jump(
        &self,
        state: &HybridState,
        vds: &mut [Option<VirtualDestinations>],
        pending_initial: bool,
    ) -> Result<HybridState, ControlError> {
        let x = &state.x;
        let mut next = state.clone();
        if state.m.is_avoidance() {
            let vd = vds[state.k]
                .as_ref()
                .ok_or(ControlError::MissingVirtualDestinations(state.k))?;
            if !self.in_jkm(x, vd, state.m) {
                return Err(ControlError::NotInJumpSet);
            }
            next.m = Mode::Zero;
            next.j += 1;
            return Ok(next);
        }
        let candidates = self.active_candidates(x, false, TAU_CONE);
        if candidates.is_empty() {
            return Err(ControlError::NotInJumpSet);
        }
        let pick = match self.cfg.mode_map {
            ModeMap::Original => Some(candidates[0]),
            ModeMap::ZenoFree => candidates
                .into_iter()
                .find(|&c| c != state.k || pending_initial),
        };
        if let Some(k) = pick {
            let (m, vd) = self.activate(x, k)?;
            vds[k] = Some(vd);
            next.k = k;
            next.m = m;
            next.j += 1;
        }
        Ok(next)
    }
}

/// `x_d` plus the canonical basis vector least aligned with `a`.
fn fallback_point(xd: &VecN, a: &VecN) -> VecN {
    let mut best = 0;
    for i in 1..a.len() {
        if a[i].abs() < a[best].abs() {
            best = i;
        }
    }
    let mut y = xd.clone();
    y[best] += 1.0;
    y
}

/// Nearest obstacle blocking the segment from `x0` to the target, or the
/// nearest obstacle when nothing blocks it.
pub fn initial_obstacle(ws: &Workspace, x0: &VecN) -> Result<usize, ControlError> {
    if ws.is_empty() {
        return Err(WorldError::Empty.into());
    }
    let by_distance = |a: &usize, b: &usize| {
        ws.distance_to(x0, *a)
            .total_cmp(&ws.distance_to(x0, *b))
            .then(a.cmp(b))
    };
    let blocking = (0..ws.len())
        .filter(|&k| {
            let o = &ws.obstacles()[k];
            segment_hits_ball(x0, ws.target(), &o.center, o.radius)
        })
        .min_by(by_distance);
    Ok(blocking.unwrap_or_else(|| (0..ws.len()).min_by(by_distance).unwrap_or(0)))
}
