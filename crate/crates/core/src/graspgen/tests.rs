use super::*;
use proptest::prelude::*;

fn sq(a: [f64; 3], e1: f64, e2: f64) -> Superquadric {
    Superquadric::new(Vec3::from(a), e1, e2, Pose::identity()).unwrap()
}

/// Root of a monotone function on `[lo, hi]` by plain bisection.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Distance from `p` to the section curve `(a cos^ε, b sin^ε)`, sampled as a
/// closed polyline with `n` segments.
fn polyline_distance(p: Vec2, a: f64, b: f64, eps: f64, n: usize) -> f64 {
    let pts: Vec<Vec2> = (0..=n)
        .map(|i| {
            let w = 2.0 * PI * i as f64 / n as f64;
            Vec2::new(a * signed_pow(w.cos(), eps), b * signed_pow(w.sin(), eps))
        })
        .collect();
    pts.windows(2)
        .map(|s| {
            let d = s[1] - s[0];
            let t = ((p - s[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (s[0] + d * t - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn inside_superellipse(p: Vec2, a: f64, b: f64, eps: f64) -> bool {
    (p.x / a).abs().powf(2.0 / eps) + (p.y / b).abs().powf(2.0 / eps) <= 1.0
}

#[test]
fn shortest_axis_and_ties() {
    assert_eq!(shortest_axis(&Vec3::new(1.0, 1.0, 0.5)), 2);
    assert_eq!(shortest_axis(&Vec3::new(0.2, 1.0, 1.0)), 0);
    assert_eq!(shortest_axis(&Vec3::new(0.5, 0.5, 0.5)), 2);
    assert_eq!(shortest_axis(&Vec3::new(0.5, 0.3, 0.3)), 2);
    assert_eq!(shortest_axis(&Vec3::new(0.3, 0.3, 0.5)), 1);

    let (axis, frame) = shortest_axis_frame(&sq([1.0, 1.0, 0.5], 1.0, 1.0));
    assert_eq!(axis, 2);
    assert!((frame.rotation - nalgebra::Matrix3::identity()).norm() < 1e-12);
    let (axis, frame) = shortest_axis_frame(&sq([1.0, 0.2, 0.7], 1.0, 1.0));
    assert_eq!(axis, 1);
    assert!((frame.axis(2).dot(&Vec3::y()).abs() - 1.0).abs() < 1e-12);
    assert!(frame.is_proper_rotation());
}

#[test]
fn boundary_omegas_match_closed_form_and_bisection() {
    let (w1, w2) = boundary_omegas(1.0, 1.0, 0.5, 4.0).unwrap();
    assert!((w1 - (1.0f64 / 64.0).asin()).abs() < 1e-9);
    assert!((w2 - (1.0f64 / 64.0).acos()).abs() < 1e-9);
    assert!((w1 - 0.015629).abs() < 1e-5 && (w2 - 1.555167).abs() < 1e-5);

    // x'(ω) = −a ε sin^(ε−1) ω and y'(ω) = a ε cos^(ε−1) ω, solved numerically
    let xp = |w: f64| -0.5 * w.sin().powf(-0.5) + 4.0;
    let yp = |w: f64| 0.5 * w.cos().powf(-0.5) - 4.0;
    assert!((bisect(1e-12, FRAC_PI_2, xp) - w1).abs() < 1e-9);
    assert!((bisect(0.0, FRAC_PI_2 - 1e-12, yp) - w2).abs() < 1e-9);

    let (w1, _) = boundary_omegas(2.0, 1.0, 0.5, 4.0).unwrap();
    assert!((w1 - (1.0f64 / 16.0).asin()).abs() < 1e-12);
    assert!((w1 - 0.062606).abs() < 1e-4);

    assert_eq!(
        boundary_omegas(1.0, 1.0, 1.2, 4.0),
        Err(GraspError::NoDiscontinuity(1.2))
    );
    assert!(matches!(
        boundary_omegas(20.0, 1.0, 0.5, 4.0),
        Err(GraspError::DegenerateBoundary { .. })
    ));
}

#[test]
fn round_section_samples() {
    let s = sq([1.0, 1.0, 0.3], 1.0, 1.0);
    let p = section_point(1.0, 1.0, 1.0, 0.0, 0.05);
    assert!((p - Vec2::new(1.05, 0.0)).norm() < 1e-15);

    let cfg = SamplingConfig {
        l_t: 0.05,
        ..Default::default()
    };
    let samples = sample_cross_section(&s, &cfg);
    assert_eq!(samples.len(), 32);
    assert!(samples.iter().all(|x| x.region == GraspRegion::Continuous));
    for mirror in [Vec2::new(-1.0, 1.0), Vec2::new(1.0, -1.0)] {
        for x in &samples {
            let m = x.point.component_mul(&mirror);
            assert!(samples.iter().any(|y| (y.point - m).norm() < 1e-12));
        }
    }
    for x in &samples {
        let w = x.omega.unwrap();
        assert!((section_point(1.0, 1.0, 1.0, w, 0.05) - x.point).norm() < 1e-12);
        assert!((x.tangent.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn boxy_section_uses_asymptotes() {
    let s = sq([1.0, 1.0, 0.3], 1.0, 0.5);
    let cfg = SamplingConfig {
        l_t: 0.05,
        ..Default::default()
    };
    let samples = sample_cross_section(&s, &cfg);
    assert_eq!(samples.len(), 4 * (8 + 2 * 4));
    let w1 = (1.0f64 / 64.0).asin();
    let b1 = section_point(1.0, 1.0, 0.5, w1, 0.05);
    let first: Vec<_> = samples[..16]
        .iter()
        .filter(|x| x.region == GraspRegion::Asymptote)
        .collect();
    assert_eq!(first.len(), 8);
    // the first segment runs from the boundary point to (1.05, 0)
    let dir = (Vec2::new(1.05, 0.0) - b1).normalize();
    for x in &first[..4] {
        let rel = x.point - b1;
        assert!((rel.x * dir.y - rel.y * dir.x).abs() < 1e-12);
        assert!(rel.dot(&dir) > 0.0 && rel.norm() < (Vec2::new(1.05, 0.0) - b1).norm());
    }
    for x in samples
        .iter()
        .filter(|x| x.region == GraspRegion::Asymptote)
    {
        assert!(!inside_superellipse(x.point, 1.0, 1.0, 0.5));
        assert!(polyline_distance(x.point, 1.0, 1.0, 0.5, 10_000) >= 0.025);
    }
    for x in samples
        .iter()
        .filter(|x| x.region == GraspRegion::Continuous)
    {
        let w = x.omega.unwrap().rem_euclid(FRAC_PI_2);
        let w = if w > FRAC_PI_2 - w { FRAC_PI_2 - w } else { w };
        assert!(w >= w1.min(FRAC_PI_2 - (1.0f64 / 64.0).acos()) - 1e-12);
    }
}

#[test]
fn meridian_sections_use_the_latitude_exponent() {
    let s = sq([0.5, 0.1, 0.4], 0.3, 1.5);
    let samples = sample_cross_section(&s, &SamplingConfig::default());
    // ε₁ = 0.3 < 1, so the steep regions are replaced by segments
    assert!(samples.iter().any(|x| x.region == GraspRegion::Asymptote));
    let round = sq([0.5, 0.4, 0.1], 0.3, 1.5);
    let samples = sample_cross_section(&round, &SamplingConfig::default());
    assert!(samples.iter().all(|x| x.region == GraspRegion::Continuous));
}

#[test]
fn candidate_construction() {
    let pose = Pose::from_axis_angle(&Vec3::new(0.2, -0.4, 0.3), Vec3::new(0.5, 1.0, -0.2));
    let s = Superquadric::new(Vec3::new(1.0, 1.0, 0.3), 0.8, 1.0, pose).unwrap();
    let gripper = GripperModel {
        max_opening: 0.8,
        palm_extent: [0.85, 0.05, 0.03],
        ..Default::default()
    };
    let set = candidates_on_sq(&s, 3, &gripper, &SamplingConfig::default());
    assert_eq!(set.rejected_width, 0);
    assert_eq!(set.candidates.len(), 64);
    let z = pose.axis(2);
    for c in &set.candidates {
        assert_eq!(c.source_sq, 3);
        assert!((c.closing_width - 0.62).abs() < 1e-12);
        assert!(c.pose.is_proper_rotation());
        assert!((c.pose.axis(0).dot(&z).abs() - 1.0).abs() < 1e-12);
        assert!(s.implicit_value(&c.pose.translation) > 1.0);
        // approach points at the center within the section plane
        let to_center = (s.center() - c.pose.translation).normalize();
        assert!((c.pose.axis(2) - to_center).norm() < 1e-12);
    }
    let flipped: Vec<_> = set.candidates.iter().filter(|c| c.flipped).collect();
    assert_eq!(flipped.len(), 32);

    let thick = sq([1.0, 1.0, 0.5], 1.0, 1.0);
    let set = candidates_on_sq(&thick, 0, &gripper, &SamplingConfig::default());
    assert!(set.candidates.is_empty());
    assert_eq!(set.rejected_width, 64);
}

#[test]
fn gripper_geometry() {
    let g = GripperModel::default();
    assert!(g.validate().is_ok());
    let region = g.closing_region(0.3);
    assert!((region.extent().x - 0.3).abs() < 1e-15);
    let pts = g.body_points(0.3);
    let boxes = g.body_boxes(0.3);
    assert!(pts.iter().all(|p| boxes.iter().any(|b| b.contains(p))));
    // no body point lies strictly inside the closing region
    let inner = Aabb::new(
        region.min + Vec3::repeat(1e-9),
        region.max - Vec3::repeat(1e-9),
    );
    assert!(pts.iter().all(|p| !inner.contains(p)));
    // corners of every box are present
    for b in boxes {
        for c in b.corners() {
            assert!(pts.iter().any(|p| (p - c).norm() < 1e-12));
        }
    }
    let narrow = GripperModel {
        palm_extent: [0.3, 0.05, 0.03],
        ..g
    };
    assert!(narrow.validate().is_err());
}

#[test]
fn candidate_records_round_trip() {
    let s = sq([0.3, 0.2, 0.1], 0.5, 0.4);
    let set = candidates_on_sq(&s, 1, &GripperModel::default(), &SamplingConfig::default());
    let records: Vec<CandidateRecord> = set.candidates.iter().map(CandidateRecord::from).collect();
    let text = serde_json::to_string(&records).unwrap();
    let back: Vec<CandidateRecord> = serde_json::from_str(&text).unwrap();
    for (r, c) in back.into_iter().zip(&set.candidates) {
        assert_eq!(GraspCandidate::try_from(r).unwrap(), *c);
    }
}

fn arb_sq() -> impl Strategy<Value = Superquadric> {
    (
        (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0),
        0.1f64..1.9,
        0.1f64..1.9,
        prop::array::uniform3(-3.0f64..3.0),
    )
        .prop_map(|((ax, ay, az), e1, e2, w)| {
            Superquadric::new(
                Vec3::new(ax, ay, az),
                e1,
                e2,
                Pose::from_axis_angle(&Vec3::from(w), Vec3::new(0.1, -0.2, 0.3)),
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn quadrant_closure(s in arb_sq(), l_t in 0.0f64..0.05) {
        let cfg = SamplingConfig { l_t, ..Default::default() };
        let samples = sample_cross_section(&s, &cfg);
        let n = samples.len() / 4;
        for k in 0..n {
            let p = samples[k].point;
            prop_assert!((samples[n + k].point - Vec2::new(-p.x, p.y)).norm() < 1e-12);
            prop_assert!((samples[2 * n + k].point + p).norm() < 1e-12);
            prop_assert!((samples[3 * n + k].point - Vec2::new(p.x, -p.y)).norm() < 1e-12);
        }
    }

    #[test]
    fn boundary_slopes_equal_threshold(a_u in 0.05f64..2.0, a_v in 0.05f64..2.0, eps in 0.1f64..0.95) {
        // sin ω₁ and cos ω₂ far below 1e-5 are not resolved by an f64 angle
        let p = 1.0 / (1.0 - eps);
        prop_assume!((a_u * eps / 4.0).powf(p) > 1e-5 && (a_v * eps / 4.0).powf(p) > 1e-5);
        let (w1, w2) = boundary_omegas(a_u, a_v, eps, 4.0).unwrap();
        prop_assert!(w1 < w2);
        let (x1, _) = section_slopes(a_u, a_v, eps, w1);
        let (_, y2) = section_slopes(a_u, a_v, eps, w2);
        prop_assert!((x1 + 4.0).abs() < 1e-9, "{}", x1);
        prop_assert!((y2 - 4.0).abs() < 1e-9, "{}", y2);
    }

    // with the semi-axes offset (not the normal), clearance stays within
    // [l_t/2, 2 l_t] when the section is not too eccentric
    #[test]
    fn round_sections_keep_offset(
        a_u in 0.2f64..1.0,
        ratio in 0.75f64..1.0,
        eps in 1.0f64..1.6,
        l_t in 0.005f64..0.03,
    ) {
        let s = sq([a_u, a_u * ratio, 0.05], 1.0, eps);
        let cfg = SamplingConfig { l_t, ..Default::default() };
        for x in sample_cross_section(&s, &cfg) {
            let d = polyline_distance(x.point, a_u, a_u * ratio, eps, 10_000);
            prop_assert!(d >= 0.5 * l_t && d <= 2.0 * l_t, "{} vs {}", d, l_t);
        }
    }

    #[test]
    fn candidate_poses_are_proper(s in arb_sq()) {
        let set = candidates_on_sq(&s, 0, &GripperModel::default(), &SamplingConfig::default());
        let axis = shortest_axis(&s.axes);
        let world_axis = s.pose.axis(axis);
        for c in &set.candidates {
            prop_assert!((c.pose.rotation.determinant() - 1.0).abs() < 1e-9);
            prop_assert!(c.pose.is_proper_rotation());
            prop_assert!((c.pose.axis(0).dot(&world_axis).abs() - 1.0).abs() < 1e-9);
            prop_assert!(c.closing_width <= GripperModel::default().max_opening);
            prop_assert!(s.implicit_value(&c.pose.translation) > 1.0 - 1e-12);
        }
    }
}
