//! Grasp validity against the object mesh: gripper clearance and
//! near-antipodal contacts inside the closing region.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, PointSet, Pose, PoseError, TriangleMesh, Vec3};
use crate::graspgen::{CandidateRecord, GraspCandidate, GripperModel};

/// Body points are grouped into cubes of this many lattice steps for the
/// clearance search.
const CLUSTER_STEPS: f64 = 4.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ValidationError {
    #[error("invalid validation config: {0}")]
    InvalidConfig(String),
}

/// Which surface points serve as contacts in the antipodal test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactSource {
    /// Mesh vertices with their vertex normals.
    Vertices,
    /// Vertices plus `contact_point_budget` area-weighted surface samples.
    #[default]
    Densified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    /// Minimum signed distance between gripper body and mesh.
    pub clearance: f64,
    pub antipodal_k: usize,
    /// Angle between contact normals and the closing direction, in radians.
    pub antipodal_theta: f64,
    pub contact_point_budget: usize,
    pub contact_source: ContactSource,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            clearance: 0.001,
            antipodal_k: 10,
            antipodal_theta: FRAC_PI_6,
            contact_point_budget: 4096,
            contact_source: ContactSource::Densified,
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |m: &str| Err(ValidationError::InvalidConfig(m.to_owned()));
        if !(self.clearance.is_finite() && self.clearance >= 0.0) {
            return bad("clearance must be non-negative");
        }
        if self.antipodal_k == 0 {
            return bad("antipodal_k must be at least 1");
        }
        if !(0.0..=FRAC_PI_2).contains(&self.antipodal_theta) {
            return bad("antipodal_theta must lie in [0, π/2]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    Collision,
    Antipodal,
    Width,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedGrasp {
    pub candidate: GraspCandidate,
    pub valid: bool,
    /// `None` when the width check failed before any distance query.
    pub min_clearance: Option<f64>,
    pub positive_contacts: usize,
    pub negative_contacts: usize,
    pub failure_reason: FailureReason,
}

/// Object surface points with outward unit normals.
#[derive(Debug, Clone)]
pub struct ContactSet {
    points: PointSet,
    normals: Vec<Vec3>,
}

impl ContactSet {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Self {
        assert_eq!(points.len(), normals.len());
        Self {
            points: PointSet::new(points),
            normals,
        }
    }

    pub fn from_mesh(mesh: &TriangleMesh, source: ContactSource, budget: usize, seed: u64) -> Self {
        let mut points = mesh.vertices().to_vec();
        let mut normals = mesh.vertex_normals().to_vec();
        if source == ContactSource::Densified && budget > 0 {
            for s in mesh.sample_surface(budget, seed) {
                points.push(s.point);
                normals.push(s.normal);
            }
        }
        Self::new(points, normals)
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        self.points.points()
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }
}

/// Lattice points of the gripper body grouped into small clusters, in the
/// gripper frame.
struct BodyClusters {
    centers: Vec<Vec3>,
    radii: Vec<f64>,
    members: Vec<Vec<Vec3>>,
}

fn body_clusters(gripper: &GripperModel, width: f64) -> BodyClusters {
    let cell = CLUSTER_STEPS * gripper.lattice_pitch;
    let mut groups: BTreeMap<[i64; 3], Vec<Vec3>> = BTreeMap::new();
    for p in gripper.body_points(width) {
        let key = [0, 1, 2].map(|i| (p[i] / cell).floor() as i64);
        groups.entry(key).or_default().push(p);
    }
    let mut out = BodyClusters {
        centers: Vec::with_capacity(groups.len()),
        radii: Vec::with_capacity(groups.len()),
        members: Vec::with_capacity(groups.len()),
    };
    for (_, pts) in groups {
        let c = Aabb::from_points(&pts).center();
        let r = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        out.centers.push(c);
        out.radii.push(r);
        out.members.push(pts);
    }
    out
}

/// Minimum signed distance from the body points (opened to `width`, placed at
/// `pose`) to the mesh, and whether it reaches `clearance`.
///
/// Exact: clusters are visited in order of a Lipschitz lower bound and skipped
/// once the bound cannot beat the running minimum.
pub fn collision_free(
    gripper: &GripperModel,
    pose: &Pose,
    width: f64,
    mesh: &TriangleMesh,
    clearance: f64,
) -> (bool, f64) {
    let clusters = body_clusters(gripper, width);
    let mut bounds: Vec<(f64, usize)> = Vec::with_capacity(clusters.centers.len());
    let mut best = f64::INFINITY;
    for (i, c) in clusters.centers.iter().enumerate() {
        let r = clusters.radii[i];
        let sd = mesh.signed_distance(&pose.transform_point(c));
        // the winding number cannot change sign within distance |sd|
        let lower = if sd > r { sd - r } else { -(sd.abs() + r) };
        if clusters.members[i].len() == 1 {
            best = best.min(sd);
        }
        bounds.push((lower, i));
    }
    bounds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (lower, i) in bounds {
        if lower >= best {
            break;
        }
        for p in &clusters.members[i] {
            best = best.min(mesh.signed_distance(&pose.transform_point(p)));
        }
    }
    (best >= clearance, best)
}

/// Counts contacts inside the closing region whose normals align with
/// (positive) or oppose (negative) the world closing direction within `theta`.
pub fn antipodal_satisfied(
    gripper: &GripperModel,
    pose: &Pose,
    width: f64,
    contacts: &ContactSet,
    k: usize,
    theta: f64,
) -> (bool, usize, usize) {
    let region = gripper.closing_region(width);
    let world = Aabb::from_points(&region.corners().map(|c| pose.transform_point(&c)));
    let mut inside = Vec::new();
    contacts.points.for_each_in_box(&world, |i| {
        if region.contains(&pose.inverse_transform_point(&contacts.points()[i])) {
            inside.push(i);
        }
    });
    count_antipodal(gripper, pose, contacts, inside.into_iter(), k, theta)
}

/// [`antipodal_satisfied`] by a scan over every contact.
pub fn antipodal_naive(
    gripper: &GripperModel,
    pose: &Pose,
    width: f64,
    contacts: &ContactSet,
    k: usize,
    theta: f64,
) -> (bool, usize, usize) {
    let region = gripper.closing_region(width);
    let inside = (0..contacts.len())
        .filter(|&i| region.contains(&pose.inverse_transform_point(&contacts.points()[i])));
    count_antipodal(gripper, pose, contacts, inside, k, theta)
}

fn count_antipodal(
    gripper: &GripperModel,
    pose: &Pose,
    contacts: &ContactSet,
    inside: impl Iterator<Item = usize>,
    k: usize,
    theta: f64,
) -> (bool, usize, usize) {
    let f = pose.transform_vector(&gripper.closing_direction());
    let cos = theta.cos();
    let (mut pos, mut neg) = (0, 0);
    for i in inside {
        let d = contacts.normals[i].dot(&f);
        if d >= cos {
            pos += 1;
        }
        if d <= -cos {
            neg += 1;
        }
    }
    (pos >= k && neg >= k, pos, neg)
}

/// Shared state for labeling candidates on one mesh.
pub struct Validator<'a> {
    mesh: &'a TriangleMesh,
    gripper: GripperModel,
    config: ValidationConfig,
    contacts: ContactSet,
}

impl<'a> Validator<'a> {
    pub fn new(
        mesh: &'a TriangleMesh,
        gripper: GripperModel,
        config: ValidationConfig,
        seed: u64,
    ) -> Self {
        let contacts = ContactSet::from_mesh(
            mesh,
            config.contact_source,
            config.contact_point_budget,
            seed,
        );
        Self::with_contacts(mesh, gripper, config, contacts)
    }

    pub fn with_contacts(
        mesh: &'a TriangleMesh,
        gripper: GripperModel,
        config: ValidationConfig,
        contacts: ContactSet,
    ) -> Self {
        Self {
            mesh,
            gripper,
            config,
            contacts,
        }
    }

    pub fn contacts(&self) -> &ContactSet {
        &self.contacts
    }

    /// Width, then collision, then antipodal; the first failure ends the checks.
    pub fn validate(&self, candidate: &GraspCandidate) -> ValidatedGrasp {
        let mut out = ValidatedGrasp {
            candidate: *candidate,
            valid: false,
            min_clearance: None,
            positive_contacts: 0,
            negative_contacts: 0,
            failure_reason: FailureReason::Width,
        };
        let width = candidate.closing_width;
        if !(width >= 0.0 && width <= self.gripper.max_opening) {
            return out;
        }
        let (free, clearance) = collision_free(
            &self.gripper,
            &candidate.pose,
            width,
            self.mesh,
            self.config.clearance,
        );
        out.min_clearance = Some(clearance);
        if !free {
            out.failure_reason = FailureReason::Collision;
            return out;
        }
        let (ok, pos, neg) = antipodal_satisfied(
            &self.gripper,
            &candidate.pose,
            width,
            &self.contacts,
            self.config.antipodal_k,
            self.config.antipodal_theta,
        );
        out.positive_contacts = pos;
        out.negative_contacts = neg;
        out.valid = ok;
        out.failure_reason = if ok {
            FailureReason::None
        } else {
            FailureReason::Antipodal
        };
        out
    }

    pub fn validate_all(&self, candidates: &[GraspCandidate]) -> Vec<ValidatedGrasp> {
        candidates.par_iter().map(|c| self.validate(c)).collect()
    }
}

/// Labels every candidate; the contact set is drawn once with `seed`.
pub fn validate_candidates(
    candidates: &[GraspCandidate],
    mesh: &TriangleMesh,
    gripper: &GripperModel,
    config: &ValidationConfig,
    seed: u64,
) -> Vec<ValidatedGrasp> {
    Validator::new(mesh, *gripper, *config, seed).validate_all(candidates)
}

/// Serialized validated grasp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidatedRecord {
    #[serde(flatten)]
    pub candidate: CandidateRecord,
    pub valid: bool,
    pub min_clearance: Option<f64>,
    pub positive_contacts: usize,
    pub negative_contacts: usize,
    pub failure_reason: FailureReason,
}

impl From<&ValidatedGrasp> for ValidatedRecord {
    fn from(v: &ValidatedGrasp) -> Self {
        Self {
            candidate: CandidateRecord::from(&v.candidate),
            valid: v.valid,
            min_clearance: v.min_clearance,
            positive_contacts: v.positive_contacts,
            negative_contacts: v.negative_contacts,
            failure_reason: v.failure_reason,
        }
    }
}

impl TryFrom<ValidatedRecord> for ValidatedGrasp {
    type Error = PoseError;

    fn try_from(r: ValidatedRecord) -> Result<Self, PoseError> {
        Ok(Self {
            candidate: GraspCandidate::try_from(r.candidate)?,
            valid: r.valid,
            min_clearance: r.min_clearance,
            positive_contacts: r.positive_contacts,
            negative_contacts: r.negative_contacts,
            failure_reason: r.failure_reason,
        })
    }
}
