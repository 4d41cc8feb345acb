//! Superquadric primitives: implicit function, spherical-product surface and a
//! radial signed-distance approximation.
//!
//! All fractional powers use the sign-preserving form `sign(u)·|u|^p`, so the
//! parametrization is defined in every octant.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, PoseError, Vec3};

/// Exponent range accepted from fits.
pub const EXPONENT_MIN: f64 = 0.1;
pub const EXPONENT_MAX: f64 = 1.9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SuperquadricError {
    #[error("semi-axes must be positive and finite, got {0:?}")]
    InvalidAxes([f64; 3]),
    #[error("shape exponents must lie in (0, 2), got ({0}, {1})")]
    InvalidExponents(f64, f64),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

/// Superquadric with semi-axes `axes`, exponents `eps1` (latitude) and `eps2`
/// (longitude), placed in the world by `pose` (canonical → world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superquadric {
    pub axes: Vec3,
    pub eps1: f64,
    pub eps2: f64,
    pub pose: Pose,
}

#[inline]
pub fn signed_pow(base: f64, exponent: f64) -> f64 {
    base.signum() * base.abs().powf(exponent)
}

impl Superquadric {
    pub fn new(axes: Vec3, eps1: f64, eps2: f64, pose: Pose) -> Result<Self, SuperquadricError> {
        if !axes.iter().all(|a| a.is_finite() && *a > 0.0) {
            return Err(SuperquadricError::InvalidAxes([axes.x, axes.y, axes.z]));
        }
        let in_range = |e: f64| e.is_finite() && e > 0.0 && e < 2.0;
        if !in_range(eps1) || !in_range(eps2) {
            return Err(SuperquadricError::InvalidExponents(eps1, eps2));
        }
        Ok(Self {
            axes,
            eps1,
            eps2,
            pose,
        })
    }

    /// Sphere of radius `r` centered at `center`.
    pub fn sphere(r: f64, center: Vec3) -> Self {
        Self {
            axes: Vec3::repeat(r),
            eps1: 1.0,
            eps2: 1.0,
            pose: Pose::from_translation(center),
        }
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn min_axis(&self) -> f64 {
        self.axes.min()
    }

    pub fn to_canonical(&self, p: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(p)
    }

    /// Implicit function F at a world point: 1 on the surface, below 1 inside.
    pub fn implicit_value(&self, p: &Vec3) -> f64 {
        self.implicit_value_canonical(&self.to_canonical(p))
    }

    pub fn implicit_value_canonical(&self, q: &Vec3) -> f64 {
        let (scale, f) = self.normalized_implicit(q);
        if scale == 0.0 {
            return 0.0;
        }
        // F is homogeneous of degree 2/ε₁
        scale.powf(2.0 / self.eps1) * f
    }

    /// Returns `(m, F(q/m))` with `m` the largest normalized coordinate, so the
    /// second value stays bounded whatever the magnitude of `q`.
    fn normalized_implicit(&self, q: &Vec3) -> (f64, f64) {
        let n = q.component_div(&self.axes).abs();
        let m = n.max();
        if m == 0.0 {
            return (0.0, 0.0);
        }
        let n = n / m;
        let e = 2.0 / self.eps2;
        let xy = n.x.powf(e) + n.y.powf(e);
        (
            m,
            xy.powf(self.eps2 / self.eps1) + n.z.powf(2.0 / self.eps1),
        )
    }

    /// Surface point r(η, ω) in the world frame.
    pub fn surface_point(&self, eta: f64, omega: f64) -> Vec3 {
        self.pose
            .transform_point(&self.surface_point_canonical(eta, omega))
    }

    pub fn surface_point_canonical(&self, eta: f64, omega: f64) -> Vec3 {
        let ce = signed_pow(eta.cos(), self.eps1);
        Vec3::new(
            self.axes.x * ce * signed_pow(omega.cos(), self.eps2),
            self.axes.y * ce * signed_pow(omega.sin(), self.eps2),
            self.axes.z * signed_pow(eta.sin(), self.eps1),
        )
    }

    /// Radial signed distance `|q|·(1 − F(q)^(−ε₁/2))`; negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.signed_distance_canonical(&self.to_canonical(p))
    }

    pub fn signed_distance_canonical(&self, q: &Vec3) -> f64 {
        let (m, f) = self.normalized_implicit(q);
        if m == 0.0 {
            return -self.min_axis();
        }
        let r = q.norm();
        // F(q)^(−ε₁/2) = F(q/m)^(−ε₁/2) / m
        r * (1.0 - f.powf(-0.5 * self.eps1) / m)
    }

    /// First-order signed distance `(g − 1)/|∇g|` with `g = F^(ε₁/2)`.
    ///
    /// `g` is homogeneous of degree one, so this is exact on spheres and on the
    /// flat faces of boxy shapes, where the radial distance overshoots.
    pub fn gradient_distance(&self, p: &Vec3) -> f64 {
        self.gradient_distance_canonical(&self.to_canonical(p))
    }

    pub fn gradient_distance_canonical(&self, q: &Vec3) -> f64 {
        let n = q.component_div(&self.axes).abs();
        let m = n.max();
        if m == 0.0 {
            return -self.min_axis();
        }
        let n = n / m;
        let (e1, e2) = (self.eps1, self.eps2);
        let xy = n.x.powf(2.0 / e2) + n.y.powf(2.0 / e2);
        let f = xy.powf(e2 / e1) + n.z.powf(2.0 / e1);
        let outer = f.powf(0.5 * e1 - 1.0);
        let inner = if xy > 0.0 {
            xy.powf(e2 / e1 - 1.0)
        } else {
            0.0
        };
        let grad = Vec3::new(
            outer * inner * n.x.powf(2.0 / e2 - 1.0) / self.axes.x,
            outer * inner * n.y.powf(2.0 / e2 - 1.0) / self.axes.y,
            outer * n.z.powf(2.0 / e1 - 1.0) / self.axes.z,
        );
        (m * f.powf(0.5 * e1) - 1.0) / grad.norm()
    }

    /// Points on an (η, ω) lattice, `n_eta` × `n_omega`, in the world frame.
    pub fn surface_samples(&self, n_eta: usize, n_omega: usize) -> Vec<Vec3> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let mut out = Vec::with_capacity(n_eta * n_omega);
        for i in 0..n_eta {
            let eta = -FRAC_PI_2 + PI * (i as f64 + 0.5) / n_eta as f64;
            for j in 0..n_omega {
                let omega = -PI + 2.0 * PI * j as f64 / n_omega as f64;
                out.push(self.surface_point(eta, omega));
            }
        }
        out
    }

    /// Bounding sphere radius around the center.
    pub fn bounding_radius(&self) -> f64 {
        // |x|,|y| ≤ a and the xy cross-section corner is reached only for small ε
        self.axes.norm()
    }
}

/// JSON record of one superquadric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperquadricRecord {
    pub a: [f64; 3],
    pub eps: [f64; 2],
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Superquadric> for SuperquadricRecord {
    fn from(sq: &Superquadric) -> Self {
        Self {
            a: [sq.axes.x, sq.axes.y, sq.axes.z],
            eps: [sq.eps1, sq.eps2],
            rotation: sq.pose.to_row_major(),
            translation: [
                sq.pose.translation.x,
                sq.pose.translation.y,
                sq.pose.translation.z,
            ],
        }
    }
}

impl TryFrom<SuperquadricRecord> for Superquadric {
    type Error = SuperquadricError;

    fn try_from(r: SuperquadricRecord) -> Result<Self, SuperquadricError> {
        let pose = Pose::new(
            Pose::rotation_from_row_major(&r.rotation),
            Vec3::from(r.translation),
        )?;
        Superquadric::new(Vec3::from(r.a), r.eps[0], r.eps[1], pose)
    }
}

pub fn to_json(sqs: &[Superquadric]) -> serde_json::Result<String> {
    let records: Vec<SuperquadricRecord> = sqs.iter().map(SuperquadricRecord::from).collect();
    serde_json::to_string_pretty(&records)
}

#[derive(Debug, thiserror::Error)]
pub enum SqSetError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] SuperquadricError),
}

pub fn from_json(text: &str) -> Result<Vec<Superquadric>, SqSetError> {
    let records: Vec<SuperquadricRecord> = serde_json::from_str(text)?;
    Ok(records
        .into_iter()
        .map(Superquadric::try_from)
        .collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn sq(a: [f64; 3], e1: f64, e2: f64) -> Superquadric {
        Superquadric::new(Vec3::from(a), e1, e2, Pose::identity()).unwrap()
    }

    #[test]
    fn implicit_value_examples() {
        assert!((sq([1.0, 1.0, 1.0], 1.0, 1.0).implicit_value(&Vec3::x()) - 1.0).abs() < 1e-15);
        assert!(
            (sq([2.0, 1.0, 1.0], 1.0, 1.0).implicit_value(&Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs()
                < 1e-15
        );
        // ((0.5^4 + 0.5^4)^1 + 0.5^4)
        let v = sq([1.0, 1.0, 1.0], 0.5, 0.5).implicit_value(&Vec3::repeat(0.5));
        assert!((v - 0.1875).abs() < 1e-12, "{v}");
    }

    #[test]
    fn surface_point_examples() {
        let p = sq([1.0, 2.0, 3.0], 0.5, 1.0).surface_point(0.0, FRAC_PI_2);
        assert!((p - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        let pole = sq([1.0, 2.0, 3.0], 0.7, 1.3).surface_point(FRAC_PI_2, 0.4);
        assert!((pole - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-6);
        let p = sq([1.0, 1.0, 1.0], 1.0, 1.0).surface_point(FRAC_PI_4, FRAC_PI_4);
        assert!((p - Vec3::new(0.5, 0.5, 2f64.sqrt() / 2.0)).norm() < 1e-12);
    }

    #[test]
    fn radial_distance_on_sphere_is_exact() {
        let s = sq([1.0, 1.0, 1.0], 1.0, 1.0);
        assert!((s.signed_distance(&Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((s.signed_distance(&Vec3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-12);
        assert_eq!(s.signed_distance(&Vec3::zeros()), -1.0);
    }

    #[test]
    fn radial_distance_on_boxy_shape_is_close_to_true_distance() {
        let s = sq([1.0, 1.0, 1.0], 0.5, 0.5);
        let p = Vec3::new(1.2, 0.0, 0.0);
        // nearest of 10^5 surface samples
        let n = 316;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let eta = -FRAC_PI_2 + PI * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let omega = -PI + 2.0 * PI * j as f64 / n as f64;
                best = best.min((s.surface_point(eta, omega) - p).norm());
            }
        }
        let d = s.signed_distance(&p);
        assert!(d > 0.0);
        assert!((d - best).abs() < 0.05, "{d} vs {best}");
    }

    #[test]
    fn gradient_distance_is_exact_on_faces_and_spheres() {
        let s = sq([0.5, 0.5, 0.5], 1.0, 1.0);
        for p in [
            Vec3::new(0.8, 0.0, 0.0),
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(0.0, 0.0, 0.0),
        ] {
            assert!((s.gradient_distance(&p) - (p.norm() - 0.5)).abs() < 1e-9);
        }
        // above the top face of a flat box, away from the axis
        let slab = sq([0.25, 0.25, 0.04], 0.1, 0.1);
        let d = slab.gradient_distance(&Vec3::new(0.15, 0.1, 0.07));
        assert!((d - 0.03).abs() < 1e-6, "{d}");
        assert!(slab.signed_distance(&Vec3::new(0.15, 0.1, 0.07)) > 0.05);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Superquadric::new(Vec3::new(1.0, 0.0, 1.0), 1.0, 1.0, Pose::identity()).is_err());
        assert!(Superquadric::new(Vec3::repeat(1.0), 2.0, 1.0, Pose::identity()).is_err());
        assert!(Superquadric::new(Vec3::repeat(1.0), 1.0, 0.0, Pose::identity()).is_err());
    }

    #[test]
    fn far_points_do_not_overflow() {
        let s = sq([0.01, 0.02, 0.03], 0.1, 1.9);
        let d = s.signed_distance(&Vec3::new(100.0, -50.0, 20.0));
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn json_round_trip() {
        let a = Superquadric::new(
            Vec3::new(0.3, 0.2, 0.1),
            0.4,
            1.3,
            Pose::from_axis_angle(&Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0, -2.0, 0.5)),
        )
        .unwrap();
        let text = to_json(&[a, Superquadric::sphere(0.5, Vec3::zeros())]).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(back[0], a);
        assert_eq!(back.len(), 2);
    }

    fn arb_sq() -> impl Strategy<Value = Superquadric> {
        (
            (0.05f64..3.0, 0.05f64..3.0, 0.05f64..3.0),
            EXPONENT_MIN..=EXPONENT_MAX,
            EXPONENT_MIN..=EXPONENT_MAX,
            (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
            (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        )
            .prop_map(|(a, e1, e2, aa, t)| {
                Superquadric::new(
                    Vec3::new(a.0, a.1, a.2),
                    e1,
                    e2,
                    Pose::from_axis_angle(&Vec3::new(aa.0, aa.1, aa.2), Vec3::new(t.0, t.1, t.2)),
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn parametrization_lies_on_implicit_surface(
            s in arb_sq(),
            eta in -FRAC_PI_2..=FRAC_PI_2,
            omega in -PI..=PI,
        ) {
            let f = s.implicit_value(&s.surface_point(eta, omega));
            prop_assert!((f - 1.0).abs() < 1e-6, "F = {}", f);
        }

        #[test]
        fn implicit_value_is_symmetric_under_sign_flips(
            s in arb_sq(),
            q in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
            flip in 0usize..8,
        ) {
            let q = Vec3::new(q.0, q.1, q.2);
            let flipped = Vec3::new(
                if flip & 1 == 1 { -q.x } else { q.x },
                if flip & 2 == 2 { -q.y } else { q.y },
                if flip & 4 == 4 { -q.z } else { q.z },
            );
            let a = s.implicit_value_canonical(&q);
            let b = s.implicit_value_canonical(&flipped);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn distance_increases_along_rays(
            s in arb_sq(),
            dir in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        ) {
            let d = Vec3::new(dir.0, dir.1, dir.2);
            prop_assume!(d.norm() > 1e-3);
            let d = d.normalize();
            let scale = s.axes.max() * 3.0;
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=100 {
                let t = scale * k as f64 / 100.0;
                let v = s.signed_distance_canonical(&(d * t));
                prop_assert!(v > prev, "not increasing at step {}", k);
                prev = v;
            }
        }
    }
}
