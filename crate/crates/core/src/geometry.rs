//! Dimension-generic Euclidean primitives: angles, reflections, cones,
//! half-spaces, planes and segment/ball tests.
//!
//! Every point and direction is a [`VecN`] whose length is the workspace
//! dimension. Set predicates compare the two sides of their defining
//! inequality with an absolute tolerance ([`TAU_CONE`]) so that the same
//! input always lands on the same side of a boundary.

use nalgebra::DVector;
use thiserror::Error;

/// Point or direction in R^n.
pub type VecN = DVector<f64>;

/// Absolute tolerance on the scalar expressions of cone and half-space tests.
pub const TAU_CONE: f64 = 1e-9;

/// Relative tolerance of the cone-parallel set test.
pub const TAU_PAR: f64 = 1e-7;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("zero-length vector where a direction is required")]
    ZeroVector,
    #[error("reflector axis is not a unit vector (norm {0})")]
    NonUnit(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("aperture {0} outside (0, pi/2]")]
    BadAperture(f64),
    #[error("plane spanning vectors are colinear")]
    DegenerateSpan,
}

/// Comparison used by the cone and half-space predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Relation {
    /// Evaluates `lhs <rel> rhs` with absolute tolerance `tol`.
    ///
    /// For any pair exactly one of `Lt`, `Eq`, `Gt` holds.
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        let s = lhs - rhs;
        match self {
            Relation::Lt => s < -tol,
            Relation::Le => s <= tol,
            Relation::Eq => s.abs() <= tol,
            Relation::Ge => s >= -tol,
            Relation::Gt => s > tol,
        }
    }
}

pub fn vec_of(coords: &[f64]) -> VecN {
    VecN::from_column_slice(coords)
}

pub fn distance(a: &VecN, b: &VecN) -> f64 {
    (a - b).norm()
}

/// Angle in `[0, pi]` between two non-zero vectors.
pub fn angle_between(a: &VecN, b: &VecN) -> Result<f64, GeometryError> {
    check_dims(a, b)?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    Ok(cos_clamped(a.dot(b) / (na * nb)).acos())
}

/// Angle between two vectors, `0` when either is zero. Used on hot paths
/// where the caller has already excluded the degenerate case.
pub(crate) fn angle_or_zero(a: &VecN, b: &VecN) -> f64 {
    let d = a.norm() * b.norm();
    if d == 0.0 {
        0.0
    } else {
        cos_clamped(a.dot(b) / d).acos()
    }
}

fn cos_clamped(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

/// Reflection of `x` about the hyperplane orthogonal to the unit vector `v`,
/// i.e. `(I - 2 v v^T) x`.
pub fn reflect(v: &VecN, x: &VecN) -> Result<VecN, GeometryError> {
    check_dims(v, x)?;
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(GeometryError::NonUnit(n));
    }
    Ok(x - v * (2.0 * v.dot(x)))
}

fn check_dims(a: &VecN, b: &VecN) -> Result<(), GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Cone with vertex, axis and half-aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    vertex: VecN,
    axis: VecN,
    aperture: f64,
    axis_norm: f64,
    cos_aperture: f64,
}

impl ConeSpec {
    pub fn new(vertex: VecN, axis: VecN, aperture: f64) -> Result<Self, GeometryError> {
        check_dims(&vertex, &axis)?;
        let axis_norm = axis.norm();
        if axis_norm == 0.0 {
            return Err(GeometryError::ZeroVector);
        }
        if !(aperture > 0.0 && aperture <= std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::BadAperture(aperture));
        }
        Ok(Self {
            vertex,
            axis,
            aperture,
            axis_norm,
            cos_aperture: aperture.cos(),
        })
    }

    pub fn vertex(&self) -> &VecN {
        &self.vertex
    }

    pub fn axis(&self) -> &VecN {
        &self.axis
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// `||v|| ||q - x|| cos(phi)  <rel>  v^T (q - x)`.
    pub fn contains(&self, q: &VecN, rel: Relation) -> bool {
        self.contains_tol(q, rel, TAU_CONE)
    }

    pub fn contains_tol(&self, q: &VecN, rel: Relation, tol: f64) -> bool {
        let (lhs, rhs) = cone_sides(
            &self.vertex,
            &self.axis,
            self.axis_norm,
            self.cos_aperture,
            q,
        );
        rel.holds(lhs, rhs, tol)
    }
}

/// Both sides of the cone inequality, `(||v|| ||q-x|| cos phi, v^T (q-x))`.
pub(crate) fn cone_sides(
    vertex: &VecN,
    axis: &VecN,
    axis_norm: f64,
    cos_aperture: f64,
    q: &VecN,
) -> (f64, f64) {
    let mut dist2 = 0.0;
    let mut dot = 0.0;
    for i in 0..q.len() {
        let d = q[i] - vertex[i];
        dist2 += d * d;
        dot += axis[i] * d;
    }
    (axis_norm * dist2.sqrt() * cos_aperture, dot)
}

/// Whether `w` is parallel to the surface of a cone with axis `v` and
/// half-aperture `phi`: `w^T v = ||w|| ||v|| cos(phi)`. The zero vector is
/// admitted.
pub fn in_parallel_set(w: &VecN, v: &VecN, phi: f64) -> bool {
    let nw = w.norm();
    if nw == 0.0 {
        return true;
    }
    let scale = nw * v.norm();
    (w.dot(v) - scale * phi.cos()).abs() <= TAU_PAR * scale
}

/// Half-space through `anchor` with normal `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceSpec {
    anchor: VecN,
    normal: VecN,
}

impl HalfSpaceSpec {
    pub fn new(anchor: VecN, normal: VecN) -> Result<Self, GeometryError> {
        check_dims(&anchor, &normal)?;
        if normal.norm() == 0.0 {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self { anchor, normal })
    }

    pub fn anchor(&self) -> &VecN {
        &self.anchor
    }

    pub fn normal(&self) -> &VecN {
        &self.normal
    }

    /// `v^T (q - x)  <rel>  0`.
    pub fn contains(&self, q: &VecN, rel: Relation) -> bool {
        rel.holds(self.signed(q), 0.0, TAU_CONE)
    }

    pub fn signed(&self, q: &VecN) -> f64 {
        let mut s = 0.0;
        for i in 0..q.len() {
            s += self.normal[i] * (q[i] - self.anchor[i]);
        }
        s
    }
}

/// Whether the segment `[a, b]` meets the closed ball `B(center, radius)`.
pub fn segment_hits_ball(a: &VecN, b: &VecN, center: &VecN, radius: f64) -> bool {
    segment_distance(a, b, center) <= radius
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(a: &VecN, b: &VecN, p: &VecN) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let lambda = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (a + ab * lambda - p).norm()
}

/// Distance from `p` to the infinite line through `a` and `b`.
pub fn line_distance(a: &VecN, b: &VecN, p: &VecN) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let ap = p - a;
    (&ap - &ab * (ap.dot(&ab) / len2)).norm()
}

/// Affine 2-plane `base + span{u1, u2}` with a cached orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSpan {
    base: VecN,
    e1: VecN,
    e2: VecN,
}

impl PlaneSpan {
    /// Minimum sine of the angle between the spanning vectors.
    pub const MIN_SINE: f64 = 1e-9;

    pub fn new(base: VecN, u1: &VecN, u2: &VecN) -> Result<Self, GeometryError> {
        check_dims(&base, u1)?;
        check_dims(&base, u2)?;
        let n1 = u1.norm();
        let n2 = u2.norm();
        if n1 == 0.0 || n2 == 0.0 {
            return Err(GeometryError::DegenerateSpan);
        }
        let e1 = u1 / n1;
        let r = u2 - &e1 * e1.dot(u2);
        let nr = r.norm();
        if nr <= Self::MIN_SINE * n2 {
            return Err(GeometryError::DegenerateSpan);
        }
        Ok(Self {
            base,
            e1,
            e2: r / nr,
        })
    }

    /// The plane through `q1`, `q2` and `y`, spanned by `q1 - y` and `q2 - y`.
    pub fn through(q1: &VecN, q2: &VecN, y: &VecN) -> Result<Self, GeometryError> {
        Self::new(y.clone(), &(q1 - y), &(q2 - y))
    }

    pub fn base(&self) -> &VecN {
        &self.base
    }

    pub fn basis(&self) -> (&VecN, &VecN) {
        (&self.e1, &self.e2)
    }

    pub fn project(&self, q: &VecN) -> VecN {
        let d = q - &self.base;
        &self.base + &self.e1 * self.e1.dot(&d) + &self.e2 * self.e2.dot(&d)
    }

    pub fn distance(&self, q: &VecN) -> f64 {
        (q - self.project(q)).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

    fn v(c: &[f64]) -> VecN {
        vec_of(c)
    }

    #[test]
    fn angle_examples() {
        assert_abs_diff_eq!(
            angle_between(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            FRAC_PI_2
        );
        assert_abs_diff_eq!(
            angle_between(&v(&[2.0, 0.0]), &v(&[5.0, 0.0])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            angle_between(&v(&[1.0, 0.0]), &v(&[-1.0, 1.0])).unwrap(),
            3.0 * PI / 4.0,
            epsilon = 1e-15
        );
        assert_eq!(
            angle_between(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(GeometryError::ZeroVector)
        );
    }

    #[test]
    fn reflect_examples() {
        let r = reflect(&v(&[1.0, 0.0]), &v(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(r, v(&[-3.0, 4.0]));
        let s = 0.5f64.sqrt();
        let r = reflect(&v(&[s, s]), &v(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(r, v(&[0.0, -1.0]), epsilon = 1e-15);
        let r = reflect(&v(&[0.0, 1.0, 0.0]), &v(&[1.0, 2.0, 3.0])).unwrap();
        assert_abs_diff_eq!(r, v(&[1.0, -2.0, 3.0]));
        assert!(matches!(
            reflect(&v(&[2.0, 0.0]), &v(&[1.0, 1.0])),
            Err(GeometryError::NonUnit(_))
        ));
    }

    #[test]
    fn cone_examples() {
        let cone = ConeSpec::new(v(&[0.0, 0.0]), v(&[1.0, 0.0]), FRAC_PI_4).unwrap();
        assert!(cone.contains(&v(&[1.0, 0.0]), Relation::Le));
        assert!(cone.contains(&v(&[1.0, 1.0]), Relation::Eq));
        assert!(!cone.contains(&v(&[0.0, 1.0]), Relation::Le));
        // the vertex sits on every closed variant
        for rel in [Relation::Le, Relation::Eq, Relation::Ge] {
            assert!(cone.contains(&v(&[0.0, 0.0]), rel));
        }
        assert!(ConeSpec::new(v(&[0.0, 0.0]), v(&[0.0, 0.0]), 0.3).is_err());
        assert!(ConeSpec::new(v(&[0.0, 0.0]), v(&[1.0, 0.0]), 2.0).is_err());
    }

    #[test]
    fn parallel_set_examples() {
        let phi = FRAC_PI_6;
        assert!(in_parallel_set(
            &v(&[phi.cos(), phi.sin()]),
            &v(&[1.0, 0.0]),
            phi
        ));
        assert!(!in_parallel_set(&v(&[1.0, 0.0]), &v(&[1.0, 0.0]), phi));
        assert!(in_parallel_set(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), FRAC_PI_4));
    }

    #[test]
    fn halfspace_examples() {
        let h = HalfSpaceSpec::new(v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
        assert!(h.contains(&v(&[1.0, 0.0]), Relation::Gt));
        assert!(h.contains(&v(&[0.0, 5.0]), Relation::Eq));
        assert!(!h.contains(&v(&[-1.0, 2.0]), Relation::Ge));
    }

    #[test]
    fn segment_ball_examples() {
        let o = v(&[0.0, 0.0]);
        assert!(segment_hits_ball(&o, &v(&[4.0, 0.0]), &v(&[2.0, 0.0]), 1.0));
        assert!(!segment_hits_ball(
            &o,
            &v(&[0.0, 4.0]),
            &v(&[2.0, 0.0]),
            1.0
        ));
        assert!(segment_hits_ball(&v(&[0.0, 2.0]), &v(&[4.0, 2.0]), &o, 2.0));
    }

    #[test]
    fn segment_tangency_matches_grid_oracle() {
        // brute-force minimum over a lambda grid of step 1e-4
        let (a, b, c) = (v(&[0.0, 2.0]), v(&[4.0, 2.0]), v(&[2.0, 0.0]));
        let oracle = (0..=10_000)
            .map(|i| {
                let l = i as f64 * 1e-4;
                (&a + (&b - &a) * l - &c).norm()
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(oracle, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(segment_distance(&a, &b, &c), oracle, epsilon = 1e-12);
        assert!(segment_hits_ball(&a, &b, &c, 2.0));
    }

    #[test]
    fn plane_examples() {
        let z0 = PlaneSpan::new(
            v(&[0.0, 0.0, 0.0]),
            &v(&[1.0, 0.0, 0.0]),
            &v(&[0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(z0.project(&v(&[1.0, 1.0, 1.0])), v(&[1.0, 1.0, 0.0]));
        assert_abs_diff_eq!(z0.distance(&v(&[1.0, 1.0, 1.0])), 1.0);
        assert_abs_diff_eq!(z0.distance(&v(&[3.0, -2.0, 0.0])), 0.0);

        let skew = PlaneSpan::new(
            v(&[0.0, 0.0, 0.0]),
            &v(&[1.0, 0.0, 0.0]),
            &v(&[1.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(skew.distance(&v(&[0.0, 0.0, 5.0])), 5.0, epsilon = 1e-15);

        assert_eq!(
            PlaneSpan::new(
                v(&[0.0, 0.0, 0.0]),
                &v(&[1.0, 0.0, 0.0]),
                &v(&[-2.0, 0.0, 0.0])
            ),
            Err(GeometryError::DegenerateSpan)
        );
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = VecN> {
        prop::collection::vec(-10.0f64..10.0, n).prop_map(|c| VecN::from_vec(c))
    }

    fn arb_unit(n: usize) -> impl Strategy<Value = VecN> {
        arb_vec(n)
            .prop_filter("non-zero", |w| w.norm() > 1e-3)
            .prop_map(|w| w.normalize())
    }

    proptest! {
        #[test]
        fn reflection_is_an_involution(n in 2usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut u = VecN::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            if u.norm() < 1e-3 { u[0] = 1.0; }
            let u = u.normalize();
            let x = VecN::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
            let twice = reflect(&u, &reflect(&u, &x).unwrap()).unwrap();
            prop_assert!((twice - &x).norm() <= 1e-12 * (1.0 + x.norm()));
            prop_assert!((reflect(&u, &x).unwrap().norm() - x.norm()).abs() <= 1e-12 * (1.0 + x.norm()));
        }

        #[test]
        fn cone_partition_is_exclusive(
            q in arb_vec(3), x in arb_vec(3), axis in arb_unit(3), phi in 0.05f64..1.57
        ) {
            prop_assume!((&q - &x).norm() > 1e-6);
            let cone = ConeSpec::new(x, axis, phi).unwrap();
            let hits = [Relation::Lt, Relation::Eq, Relation::Gt]
                .iter()
                .filter(|r| cone.contains(&q, **r))
                .count();
            prop_assert_eq!(hits, 1);
        }

        #[test]
        fn angle_symmetric_and_triangle(a in arb_unit(4), b in arb_unit(4), c in arb_unit(4)) {
            let ab = angle_between(&a, &b).unwrap();
            let ba = angle_between(&b, &a).unwrap();
            let bc = angle_between(&b, &c).unwrap();
            let ac = angle_between(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-15);
            prop_assert!(ac <= ab + bc + 1e-7);
        }

        #[test]
        fn cones_meeting_lemma_intersect_only_at_vertex(
            c in arb_vec(3), v1 in arb_unit(3), vm1 in arb_unit(3),
            f1 in 0.0f64..1.0, fm1 in 0.0f64..1.0, samples in prop::collection::vec(arb_vec(3), 64)
        ) {
            let psi = angle_between(&v1, &vm1).unwrap();
            prop_assume!(psi > 1e-3 && psi < PI - 1e-3);
            // scale the apertures so that phi_1 + phi_-1 < psi < pi - (phi_1 + phi_-1)
            let budget = psi.min(PI - psi) * 0.999;
            let (p1, pm1) = (f1 * budget / 2.0, fm1 * budget / 2.0);
            prop_assume!(p1 > 1e-4 && pm1 > 1e-4);
            let k1 = ConeSpec::new(c.clone(), v1, p1).unwrap();
            let km1 = ConeSpec::new(c.clone(), vm1, pm1).unwrap();
            for s in &samples {
                // points of the first cone, by pushing samples onto its axis side
                let q = &c + k1.axis() * (1.0 + s.norm()) + (s - k1.axis() * k1.axis().dot(s)) * (p1.tan() * 0.999 / (1.0 + s.norm()).max(1.0)).min(0.0);
                if k1.contains_tol(&q, Relation::Le, 0.0) && km1.contains_tol(&q, Relation::Le, 0.0) {
                    prop_assert!((&q - &c).norm() <= TAU_CONE);
                }
                if k1.contains_tol(s, Relation::Le, 0.0) && km1.contains_tol(s, Relation::Le, 0.0) {
                    prop_assert!((s - &c).norm() <= TAU_CONE);
                }
            }
        }
    }
}
