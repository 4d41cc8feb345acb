use super::*;
use crate::fixtures;
use nalgebra::{Matrix3, Rotation3};
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn twin() -> (TriangleMesh, Vec<Superquadric>) {
    let a = fixtures::sphere_at(Vec3::new(-0.5, 0.0, 0.0), 0.25, 3);
    let b = fixtures::sphere_at(Vec3::new(0.5, 0.0, 0.0), 0.25, 3);
    let mesh = TriangleMesh::merged(&[&a, &b]).unwrap();
    let sqs = vec![
        Superquadric::sphere(0.25, Vec3::new(-0.5, 0.0, 0.0)),
        Superquadric::sphere(0.25, Vec3::new(0.5, 0.0, 0.0)),
    ];
    (mesh, sqs)
}

fn rotation(a: f64, b: f64, c: f64) -> Matrix3<f64> {
    let r = Rotation3::from_axis_angle(&Vec3::x_axis(), a)
        * Rotation3::from_axis_angle(&Vec3::y_axis(), b)
        * Rotation3::from_axis_angle(&Vec3::z_axis(), c);
    r.into_inner()
}

#[test]
fn stride_subsampling() {
    assert_eq!(stride_indices(5, 10), vec![0, 1, 2, 3, 4]);
    assert_eq!(stride_indices(10, 4), vec![0, 2, 5, 7]);
    assert_eq!(stride_indices(128, 50).len(), 50);
    assert!(stride_indices(0, 3).is_empty());
}

#[test]
fn primitive_order_and_ties() {
    let (_, sqs) = twin();
    assert_eq!(
        sq_order(&sqs, &Vec3::new(1.0, 0.0, 0.0), SqOrder::Closest),
        vec![1, 0]
    );
    assert_eq!(
        sq_order(&sqs, &Vec3::new(1.0, 0.0, 0.0), SqOrder::Farthest),
        vec![0, 1]
    );
    assert_eq!(
        sq_order(&sqs, &Vec3::new(0.0, 2.0, 0.0), SqOrder::Closest),
        vec![0, 1]
    );
    assert_eq!(
        sq_order(&sqs, &Vec3::new(0.0, 2.0, 0.0), SqOrder::Farthest),
        vec![0, 1]
    );
}

#[test]
fn viewpoints_look_at_the_center() {
    let b = Aabb::new(Vec3::new(-0.3, -0.2, 0.0), Vec3::new(0.5, 0.2, 0.9));
    let c = b.center();
    let views = generate_viewpoints(&b, 4);
    assert_eq!(views.len(), 8);
    for (k, v) in views.iter().enumerate() {
        let r = VIEWPOINT_RADII[k / 4] * b.diagonal();
        let offset = c - v.translation;
        assert!((offset.norm() - r).abs() < 1e-9);
        assert!((v.axis(2).dot(&offset.normalize()) - 1.0).abs() < 1e-9);
        assert!(v.is_proper_rotation());
        let elevation = (-offset.z / offset.norm()).asin().to_degrees();
        assert!((15.0..=75.0).contains(&elevation), "{elevation}");
    }
    assert_eq!(views, generate_viewpoints(&b, 4));

    let azimuths = |seed| {
        let mut a: Vec<u64> = generate_viewpoints(&b, seed)
            .iter()
            .map(|v| {
                let d = v.translation - c;
                (d.y.atan2(d.x).to_degrees() * 1e6).round() as i64 as u64
            })
            .collect();
        a.sort();
        a
    };
    let sets: Vec<_> = (0..10).map(azimuths).collect();
    for i in 0..10 {
        for j in i + 1..10 {
            assert_ne!(sets[i], sets[j]);
        }
    }
}

#[test]
fn metric_examples() {
    let id = Pose::identity();
    assert_eq!(rotational_difference(&id, &id), 0.0);
    assert_eq!(translational_difference(&id, &id), 0.0);
    let quarter = Pose::from_axis_angle(&Vec3::new(0.0, 0.0, FRAC_PI_2), Vec3::zeros());
    let e = euler_xyz(&quarter.rotation);
    assert!(e[0].abs() < 1e-12 && e[1].abs() < 1e-12 && (e[2] - FRAC_PI_2).abs() < 1e-12);
    assert!((rotational_difference(&quarter, &id) - 30.0).abs() < 1e-9);

    // the rotation is taken relative to the gripper
    let g = Pose::from_axis_angle(&Vec3::new(0.3, -1.1, 0.4), Vec3::new(1.0, 2.0, 3.0));
    assert!(rotational_difference(&g, &g).abs() < 1e-6);
}

fn valid_at(t: Vec3) -> ValidatedGrasp {
    ValidatedGrasp {
        candidate: crate::graspgen::GraspCandidate {
            pose: Pose::from_translation(t),
            source_sq: 0,
            region: crate::graspgen::GraspRegion::Continuous,
            omega: None,
            closing_width: 0.1,
            flipped: false,
        },
        valid: true,
        min_clearance: Some(0.01),
        positive_contacts: 10,
        negative_contacts: 10,
        failure_reason: FailureReason::None,
    }
}

#[test]
fn metrics_aggregate_and_mark_absence() {
    let id = Pose::identity();
    let (all, closest) = compute_metrics(&[vec![valid_at(Vec3::x())]], &[id]);
    assert_eq!(all.m_td, Some(1.0));
    assert_eq!(all.m_rd, Some(0.0));
    assert_eq!(all.m_num, 1.0);
    assert_eq!(closest, all);

    let mut invalid = valid_at(Vec3::x());
    invalid.valid = false;
    invalid.failure_reason = FailureReason::Collision;
    let (all, _) = compute_metrics(&[vec![invalid], vec![]], &[id, id]);
    assert_eq!(all.m_num, 0.0);
    assert_eq!((all.m_rd, all.m_td), (None, None));

    let views = vec![
        vec![valid_at(Vec3::x()), valid_at(Vec3::new(3.0, 0.0, 0.0))],
        vec![valid_at(Vec3::new(0.0, 2.0, 0.0))],
    ];
    let (all, closest) = compute_metrics(&views, &[id, id]);
    assert_eq!(all.m_num, 1.5);
    assert_eq!(all.m_td, Some(2.0));
    assert_eq!(closest.m_td, Some(1.5));
}

#[test]
fn plans_on_the_nearer_sphere() {
    let (mesh, sqs) = twin();
    let gripper = GripperModel::default();
    let near_b = Pose::from_translation(Vec3::new(1.5, 0.2, 0.3));
    let r = plan_grasps(&sqs, &mesh, &gripper, &PlanRequest::new(near_b), 0).unwrap();
    assert_eq!(r.chosen_sq, Some(1));
    assert!(r.valid_count() > 0);
    assert!(r.grasps.iter().all(|g| g.candidate.source_sq == 1));
    assert!(r.grasps.len() <= DEFAULT_BUDGET);

    let middle = Pose::from_translation(Vec3::new(0.0, 1.0, 0.0));
    let r = plan_grasps(&sqs, &mesh, &gripper, &PlanRequest::new(middle), 0).unwrap();
    assert_eq!(r.chosen_sq, Some(0));
}

#[test]
fn small_gripper_tallies_width() {
    let (mesh, sqs) = twin();
    let gripper = GripperModel {
        max_opening: 0.1,
        palm_extent: [0.14, 0.05, 0.03],
        ..Default::default()
    };
    let r = plan_grasps(
        &sqs,
        &mesh,
        &gripper,
        &PlanRequest::new(Pose::identity()),
        0,
    )
    .unwrap();
    assert_eq!(r.chosen_sq, None);
    assert!(r.grasps.is_empty());
    assert_eq!(r.tallies.len(), 2);
    assert!(r.tallies.iter().all(|t| t.width > 0 && t.valid == 0));
}

#[test]
fn validity_does_not_depend_on_the_viewpoint() {
    let (mesh, sqs) = twin();
    let views = [
        Pose::from_translation(Vec3::new(-1.5, 0.0, 0.5)),
        Pose::from_translation(Vec3::new(-0.8, -1.0, 0.2)),
    ];
    let results: Vec<PlanResult> = views
        .iter()
        .map(|v| {
            // separate planners, so nothing is shared through the cache
            Planner::new(
                &sqs,
                &mesh,
                GripperModel::default(),
                SamplingConfig::default(),
                ValidationConfig::default(),
                9,
            )
            .unwrap()
            .plan(v, DEFAULT_BUDGET, SqOrder::Closest)
        })
        .collect();
    assert_eq!(results[0].chosen_sq, Some(0));
    assert_eq!(results[1].chosen_sq, Some(0));
    assert_eq!(results[0].grasps, results[1].grasps);
}

#[test]
fn empty_decomposition_is_an_error() {
    let (mesh, _) = twin();
    assert!(matches!(
        plan_grasps(
            &[],
            &mesh,
            &GripperModel::default(),
            &PlanRequest::new(Pose::identity()),
            0
        ),
        Err(PlanError::EmptyDecomposition)
    ));
}

#[test]
fn csv_schema() {
    let e = Evaluation {
        object: "sphere".into(),
        metrics: EvalMetrics {
            m_num: 12.5,
            m_rd: Some(40.0),
            m_td: Some(0.75),
        },
        closest_metrics: EvalMetrics {
            m_num: 12.5,
            m_rd: None,
            m_td: None,
        },
        viewpoints: Vec::new(),
    };
    let csv = report_csv(&[e]);
    assert_eq!(
        csv,
        "object,method,mRD_deg,mTD,mNum\n\
         sphere,sq_grasp,40.0000,0.750000,12.5000\n\
         sphere,sq_grasp_closest,NA,NA,12.5000\n"
    );
}

proptest! {
    #[test]
    fn euler_angles_reconstruct(a in -3.1f64..3.1, b in -1.5f64..1.5, c in -3.1f64..3.1) {
        let r = rotation(a, b, c);
        let [x, y, z] = euler_xyz(&r);
        prop_assert!((rotation(x, y, z) - r).abs().max() < 1e-9);
        let rd = rotational_difference(&Pose::new(r, Vec3::zeros()).unwrap(), &Pose::identity());
        prop_assert!((0.0..=180.0).contains(&rd));
    }

    #[test]
    fn gimbal_lock_reconstructs(a in -3.1f64..3.1, sign in prop::bool::ANY) {
        let b = if sign { FRAC_PI_2 } else { -FRAC_PI_2 };
        let r = rotation(a, b, 0.0);
        let [x, y, z] = euler_xyz(&r);
        prop_assert!((rotation(x, y, z) - r).abs().max() < 1e-6);
    }
}
