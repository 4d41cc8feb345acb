//! Closest-primitive grasp planning and the viewpoint evaluation protocol.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{marching_primitives, DecomposeError, DecompositionConfig};
use crate::geometry::{Aabb, Pose, PoseRecord, TriangleMesh, Vec3};
use crate::graspgen::{candidates_on_sq, CandidateSet, GraspError, GripperModel, SamplingConfig};
use crate::sdfgrid::{build_sdf, SdfError, DEFAULT_RESOLUTION, DEFAULT_TRUNCATION_FACTOR};
use crate::superquadric::Superquadric;
use crate::validate::{
    FailureReason, ValidatedGrasp, ValidatedRecord, ValidationConfig, ValidationError, Validator,
};

pub const DEFAULT_BUDGET: usize = 50;
pub const VIEWPOINT_COUNT: usize = 8;
/// Semi-sphere radii as multiples of the bounding-box diagonal.
pub const VIEWPOINT_RADII: [f64; 2] = [1.5, 2.5];
/// Elevation range of viewpoints above the horizontal, in degrees.
pub const VIEWPOINT_ELEVATION_DEG: [f64; 2] = [15.0, 75.0];

/// Method labels in the evaluation report.
pub const METHOD_ALL: &str = "sq_grasp";
pub const METHOD_CLOSEST: &str = "sq_grasp_closest";
pub const CSV_HEADER: &str = "object,method,mRD_deg,mTD,mNum";

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("decomposition has no primitives")]
    EmptyDecomposition,
    #[error(transparent)]
    Sdf(#[from] SdfError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Grasp(#[from] GraspError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Order in which primitives are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqOrder {
    /// Nearest center to the gripper first.
    #[default]
    Closest,
    /// Farthest center first; a control for the proximity comparison.
    Farthest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    /// Current gripper frame in world coordinates.
    pub gripper_pose: Pose,
    pub candidate_budget: usize,
    pub sampling: SamplingConfig,
    pub validation: ValidationConfig,
}

impl PlanRequest {
    pub fn new(gripper_pose: Pose) -> Self {
        Self {
            gripper_pose,
            candidate_budget: DEFAULT_BUDGET,
            sampling: SamplingConfig::default(),
            validation: ValidationConfig::default(),
        }
    }
}

/// Per-primitive outcome counts of one planning run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqTally {
    pub sq: usize,
    pub validated: usize,
    pub valid: usize,
    pub width: usize,
    pub collision: usize,
    pub antipodal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// Every validated candidate of the visited primitives, in visit order.
    pub grasps: Vec<ValidatedGrasp>,
    /// Primitive that produced the valid grasps.
    pub chosen_sq: Option<usize>,
    pub tallies: Vec<SqTally>,
}

impl PlanResult {
    pub fn valid(&self) -> impl Iterator<Item = &ValidatedGrasp> {
        self.grasps.iter().filter(|g| g.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }
}

/// Indices of `take` items spread evenly over `0..n`.
pub fn stride_indices(n: usize, take: usize) -> Vec<usize> {
    if take >= n {
        return (0..n).collect();
    }
    (0..take).map(|i| i * n / take).collect()
}

/// Primitive indices ordered by center distance to `from`; ties keep the
/// lower index first.
pub fn sq_order(primitives: &[Superquadric], from: &Vec3, order: SqOrder) -> Vec<usize> {
    let dist: Vec<f64> = primitives
        .iter()
        .map(|s| (s.center() - from).norm())
        .collect();
    let mut idx: Vec<usize> = (0..primitives.len()).collect();
    idx.sort_by(|&a, &b| {
        let by = match order {
            SqOrder::Closest => dist[a].total_cmp(&dist[b]),
            SqOrder::Farthest => dist[b].total_cmp(&dist[a]),
        };
        by.then(a.cmp(&b))
    });
    idx
}

/// Planner over a fixed decomposition. Candidates are generated once per
/// primitive and each validation result is cached, since validity does not
/// depend on the gripper pose.
pub struct Planner<'a> {
    primitives: &'a [Superquadric],
    validator: Validator<'a>,
    candidates: Vec<CandidateSet>,
    cache: Vec<Vec<OnceLock<ValidatedGrasp>>>,
}

impl<'a> Planner<'a> {
    pub fn new(
        primitives: &'a [Superquadric],
        mesh: &'a TriangleMesh,
        gripper: GripperModel,
        sampling: SamplingConfig,
        validation: ValidationConfig,
        seed: u64,
    ) -> Result<Self, PlanError> {
        if primitives.is_empty() {
            return Err(PlanError::EmptyDecomposition);
        }
        gripper.validate()?;
        sampling.validate()?;
        validation.validate()?;
        let candidates: Vec<CandidateSet> = primitives
            .iter()
            .enumerate()
            .map(|(i, sq)| candidates_on_sq(sq, i, &gripper, &sampling))
            .collect();
        let cache = candidates
            .iter()
            .map(|c| (0..c.candidates.len()).map(|_| OnceLock::new()).collect())
            .collect();
        Ok(Self {
            primitives,
            validator: Validator::new(mesh, gripper, validation, seed),
            candidates,
            cache,
        })
    }

    pub fn candidates(&self, sq: usize) -> &CandidateSet {
        &self.candidates[sq]
    }

    fn validated(&self, sq: usize, idx: &[usize]) -> Vec<ValidatedGrasp> {
        idx.par_iter()
            .map(|&i| {
                *self.cache[sq][i]
                    .get_or_init(|| self.validator.validate(&self.candidates[sq].candidates[i]))
            })
            .collect()
    }

    /// Visits primitives in `order` from the gripper position until one yields
    /// a valid grasp or `budget` candidates have been validated.
    pub fn plan(&self, gripper_pose: &Pose, budget: usize, order: SqOrder) -> PlanResult {
        let mut result = PlanResult {
            grasps: Vec::new(),
            chosen_sq: None,
            tallies: Vec::new(),
        };
        let mut remaining = budget;
        for sq in sq_order(self.primitives, &gripper_pose.translation, order) {
            if remaining == 0 {
                break;
            }
            let set = &self.candidates[sq];
            let idx = stride_indices(set.candidates.len(), remaining);
            remaining -= idx.len();
            let grasps = self.validated(sq, &idx);
            let mut tally = SqTally {
                sq,
                validated: grasps.len(),
                width: set.rejected_width,
                ..Default::default()
            };
            for g in &grasps {
                match g.failure_reason {
                    FailureReason::None => tally.valid += 1,
                    FailureReason::Width => tally.width += 1,
                    FailureReason::Collision => tally.collision += 1,
                    FailureReason::Antipodal => tally.antipodal += 1,
                }
            }
            result.grasps.extend(grasps);
            result.tallies.push(tally);
            if tally.valid > 0 {
                result.chosen_sq = Some(sq);
                break;
            }
        }
        result
    }
}

/// One-shot planning with the closest-primitive order.
pub fn plan_grasps(
    primitives: &[Superquadric],
    mesh: &TriangleMesh,
    gripper: &GripperModel,
    request: &PlanRequest,
    seed: u64,
) -> Result<PlanResult, PlanError> {
    if request.candidate_budget == 0 {
        return Err(PlanError::InvalidRequest(
            "candidate_budget must be at least 1".into(),
        ));
    }
    let planner = Planner::new(
        primitives,
        mesh,
        *gripper,
        request.sampling,
        request.validation,
        seed,
    )?;
    Ok(planner.plan(
        &request.gripper_pose,
        request.candidate_budget,
        SqOrder::Closest,
    ))
}

/// Eight camera poses looking at the box center: four on each of two upper
/// semi-spheres, with uniform azimuth and elevation in
/// [`VIEWPOINT_ELEVATION_DEG`]. The pose `z` axis points at the center.
pub fn generate_viewpoints(bounds: &Aabb, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = bounds.center();
    let [lo, hi] = VIEWPOINT_ELEVATION_DEG.map(f64::to_radians);
    let mut out = Vec::with_capacity(VIEWPOINT_COUNT);
    for factor in VIEWPOINT_RADII {
        let r = factor * bounds.diagonal();
        for _ in 0..VIEWPOINT_COUNT / VIEWPOINT_RADII.len() {
            let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
            let elevation = rng.gen_range(lo..hi);
            let dir = Vec3::new(
                elevation.cos() * azimuth.cos(),
                elevation.cos() * azimuth.sin(),
                elevation.sin(),
            );
            let z = -dir;
            let x = z.cross(&Vec3::z()).normalize();
            out.push(Pose::from_columns(x, z.cross(&x), z, center + dir * r));
        }
    }
    out
}

/// Intrinsic XYZ Euler angles `(a, b, c)` with `R = Rx(a)·Ry(b)·Rz(c)`.
pub fn euler_xyz(r: &nalgebra::Matrix3<f64>) -> [f64; 3] {
    let s = r[(0, 2)].clamp(-1.0, 1.0);
    let b = s.asin();
    if s.abs() > 1.0 - 1e-12 {
        // gimbal lock: only a ± c is defined; put it all in a
        let a = if s > 0.0 {
            r[(1, 0)].atan2(r[(1, 1)])
        } else {
            (-r[(1, 0)]).atan2(r[(1, 1)])
        };
        return [a, b, 0.0];
    }
    [
        (-r[(1, 2)]).atan2(r[(2, 2)]),
        b,
        (-r[(0, 1)]).atan2(r[(0, 0)]),
    ]
}

/// Mean absolute Euler angle of `grasp · gripperᵀ`, in degrees.
pub fn rotational_difference(grasp: &Pose, gripper: &Pose) -> f64 {
    let e = euler_xyz(&(grasp.rotation * gripper.rotation.transpose()));
    e.iter().map(|v| v.abs().to_degrees()).sum::<f64>() / 3.0
}

pub fn translational_difference(grasp: &Pose, gripper: &Pose) -> f64 {
    (grasp.translation - gripper.translation).norm()
}

/// Aggregate metrics; `None` marks a mean over zero valid grasps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub m_num: f64,
    pub m_rd: Option<f64>,
    pub m_td: Option<f64>,
}

/// Headline metrics over all valid grasps, and the variant that keeps only
/// the grasp nearest to the gripper in each viewpoint.
pub fn compute_metrics(
    validated: &[Vec<ValidatedGrasp>],
    gripper_poses: &[Pose],
) -> (EvalMetrics, EvalMetrics) {
    assert_eq!(validated.len(), gripper_poses.len());
    let mut all = (0.0, 0.0, 0usize);
    let mut closest = (0.0, 0.0, 0usize);
    let mut count = 0usize;
    for (grasps, gripper) in validated.iter().zip(gripper_poses) {
        let mut best: Option<(f64, f64)> = None;
        for g in grasps.iter().filter(|g| g.valid) {
            let rd = rotational_difference(&g.candidate.pose, gripper);
            let td = translational_difference(&g.candidate.pose, gripper);
            all = (all.0 + rd, all.1 + td, all.2 + 1);
            if best.is_none_or(|(_, t)| td < t) {
                best = Some((rd, td));
            }
            count += 1;
        }
        if let Some((rd, td)) = best {
            closest = (closest.0 + rd, closest.1 + td, closest.2 + 1);
        }
    }
    let m_num = if validated.is_empty() {
        0.0
    } else {
        count as f64 / validated.len() as f64
    };
    let mean = |(rd, td, n): (f64, f64, usize)| EvalMetrics {
        m_num,
        m_rd: (n > 0).then(|| rd / n as f64),
        m_td: (n > 0).then(|| td / n as f64),
    };
    (mean(all), mean(closest))
}

/// Settings of a full evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub resolution: usize,
    pub truncation_factor: f64,
    pub decomposition: DecompositionConfig,
    pub sampling: SamplingConfig,
    pub validation: ValidationConfig,
    pub gripper: GripperModel,
    pub candidate_budget: usize,
    pub order: SqOrder,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            truncation_factor: DEFAULT_TRUNCATION_FACTOR,
            decomposition: DecompositionConfig::default(),
            sampling: SamplingConfig::default(),
            validation: ValidationConfig::default(),
            gripper: GripperModel::default(),
            candidate_budget: DEFAULT_BUDGET,
            order: SqOrder::Closest,
            seed: 0,
        }
    }
}

/// What happened at one viewpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointDetail {
    pub viewpoint_pose: PoseRecord,
    pub chosen_sq: Option<usize>,
    pub validated_count: usize,
    pub valid_count: usize,
    pub closest_grasp: Option<ValidatedRecord>,
    pub tallies: Vec<SqTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub object: String,
    pub metrics: EvalMetrics,
    pub closest_metrics: EvalMetrics,
    pub viewpoints: Vec<ViewpointDetail>,
}

/// Voxelizes and decomposes `mesh`, then runs [`evaluate_decomposed`].
pub fn evaluate_object(
    object: &str,
    mesh: &TriangleMesh,
    config: &EvalConfig,
) -> Result<Evaluation, PlanError> {
    let grid = build_sdf(mesh, config.resolution, config.truncation_factor)?;
    let decomposition = marching_primitives(&grid, &config.decomposition)?;
    evaluate_decomposed(object, mesh, &decomposition.primitives, config)
}

/// Plans from each of the eight viewpoints with a shared planner and
/// aggregates the metrics.
pub fn evaluate_decomposed(
    object: &str,
    mesh: &TriangleMesh,
    primitives: &[Superquadric],
    config: &EvalConfig,
) -> Result<Evaluation, PlanError> {
    if config.candidate_budget == 0 {
        return Err(PlanError::InvalidRequest(
            "candidate_budget must be at least 1".into(),
        ));
    }
    let planner = Planner::new(
        primitives,
        mesh,
        config.gripper,
        config.sampling,
        config.validation,
        config.seed,
    )?;
    let views = generate_viewpoints(&mesh.bounds(), config.seed);
    let results: Vec<PlanResult> = views
        .par_iter()
        .map(|v| planner.plan(v, config.candidate_budget, config.order))
        .collect();
    let validated: Vec<Vec<ValidatedGrasp>> = results.iter().map(|r| r.grasps.clone()).collect();
    let (metrics, closest_metrics) = compute_metrics(&validated, &views);
    let viewpoints = views
        .iter()
        .zip(&results)
        .map(|(v, r)| ViewpointDetail {
            viewpoint_pose: PoseRecord::from(v),
            chosen_sq: r.chosen_sq,
            validated_count: r.grasps.len(),
            valid_count: r.valid_count(),
            closest_grasp: r
                .valid()
                .min_by(|a, b| {
                    translational_difference(&a.candidate.pose, v)
                        .total_cmp(&translational_difference(&b.candidate.pose, v))
                })
                .map(ValidatedRecord::from),
            tallies: r.tallies.clone(),
        })
        .collect();
    Ok(Evaluation {
        object: object.to_owned(),
        metrics,
        closest_metrics,
        viewpoints,
    })
}

fn csv_value(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.digits$}"))
}

/// Report rows with the columns of [`CSV_HEADER`], two per object.
pub fn report_csv(evaluations: &[Evaluation]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for e in evaluations {
        for (method, m) in [
            (METHOD_ALL, &e.metrics),
            (METHOD_CLOSEST, &e.closest_metrics),
        ] {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4}",
                e.object,
                method,
                csv_value(m.m_rd, 4),
                csv_value(m.m_td, 6),
                m.m_num
            );
        }
    }
    out
}

#[cfg(test)]
mod tests;
