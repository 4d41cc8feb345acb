//! Parallel-jaw grasp candidates sampled on one superquadric.
//!
//! Candidates lie on the cross-section through the primitive's center
//! perpendicular to its shortest axis. The section curve is offset outward by
//! a tolerance `l_t`; where the curve has near-vertical slope (exponent below
//! one) the steep parts are replaced by straight segments to the axis
//! intercepts, so sampling in angle does not leave gaps near the corners.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, PoseError, PoseRecord, Vec3};
use crate::superquadric::{signed_pow, Superquadric};

pub type Vec2 = Vector2<f64>;

/// Slope magnitude at which the section curve is treated as discontinuous.
pub const SLOPE_THRESHOLD: f64 = 4.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraspError {
    #[error("invalid gripper: {0}")]
    InvalidGripper(String),
    #[error("invalid sampling config: {0}")]
    InvalidSampling(String),
    #[error("section exponent {0} ≥ 1 has no steep region")]
    NoDiscontinuity(f64),
    #[error("slope threshold {threshold} is never reached on this section")]
    DegenerateBoundary { threshold: f64 },
    #[error(transparent)]
    Pose(#[from] PoseError),
}

/// Parallel-jaw gripper in its own frame: `x` is the closing direction, `y`
/// runs across the finger width and `z` is the approach direction. The palm
/// occupies `z ∈ [−palm_z, 0]`, the fingers extend from the palm face to
/// `z = finger_length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperModel {
    pub max_opening: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    /// Palm box sizes; `x` must span the fully open fingers.
    pub palm_extent: [f64; 3],
    /// Spacing of the body point lattice.
    pub lattice_pitch: f64,
}

impl Default for GripperModel {
    /// A wide gripper sized for furniture-scale parts.
    fn default() -> Self {
        Self {
            max_opening: 0.6,
            finger_length: 0.25,
            finger_thickness: 0.01,
            palm_extent: [0.64, 0.05, 0.03],
            lattice_pitch: 0.005,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GraspError> {
        let bad = |m: &str| Err(GraspError::InvalidGripper(m.to_owned()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.max_opening) {
            return bad("max_opening must be positive");
        }
        if !positive(self.finger_length) || !positive(self.finger_thickness) {
            return bad("finger dimensions must be positive");
        }
        if !self.palm_extent.iter().all(|&v| positive(v)) {
            return bad("palm extent must be positive");
        }
        if self.palm_extent[0] < self.max_opening + 2.0 * self.finger_thickness {
            return bad("palm must span the fully open fingers");
        }
        if !positive(self.lattice_pitch) {
            return bad("lattice_pitch must be positive");
        }
        Ok(())
    }

    /// Jaw-closing axis in the gripper frame.
    pub fn closing_direction(&self) -> Vec3 {
        Vec3::x()
    }

    /// Box between the fingers when opened to `width`.
    pub fn closing_region(&self, width: f64) -> Aabb {
        let half_y = 0.5 * self.palm_extent[1];
        Aabb::new(
            Vec3::new(-0.5 * width, -half_y, 0.0),
            Vec3::new(0.5 * width, half_y, self.finger_length),
        )
    }

    /// Palm and finger boxes for an opening of `width`.
    pub fn body_boxes(&self, width: f64) -> [Aabb; 3] {
        let [px, py, pz] = self.palm_extent;
        let (hw, t, hy) = (0.5 * width, self.finger_thickness, 0.5 * py);
        [
            Aabb::new(Vec3::new(-0.5 * px, -hy, -pz), Vec3::new(0.5 * px, hy, 0.0)),
            Aabb::new(
                Vec3::new(hw, -hy, 0.0),
                Vec3::new(hw + t, hy, self.finger_length),
            ),
            Aabb::new(
                Vec3::new(-hw - t, -hy, 0.0),
                Vec3::new(-hw, hy, self.finger_length),
            ),
        ]
    }

    /// Body point set: a lattice over each box, boundary included, at no more
    /// than `lattice_pitch` spacing.
    pub fn body_points(&self, width: f64) -> Vec<Vec3> {
        let mut out = Vec::new();
        for b in self.body_boxes(width) {
            let e = b.extent();
            let n = e.map(|v| (v / self.lattice_pitch).ceil().max(1.0) as usize + 1);
            for k in 0..n.z {
                for j in 0..n.y {
                    for i in 0..n.x {
                        let f = Vec3::new(
                            i as f64 / (n.x - 1) as f64,
                            j as f64 / (n.y - 1) as f64,
                            k as f64 / (n.z - 1) as f64,
                        );
                        out.push(b.min + e.component_mul(&f));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Outward offset of the sampled section curve.
    pub l_t: f64,
    pub samples_per_quadrant: usize,
    pub asymptote_samples: usize,
    pub slope_threshold: f64,
    pub generate_flipped: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            l_t: 0.01,
            samples_per_quadrant: 8,
            asymptote_samples: 4,
            slope_threshold: SLOPE_THRESHOLD,
            generate_flipped: true,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), GraspError> {
        let bad = |m: &str| Err(GraspError::InvalidSampling(m.to_owned()));
        if !(self.l_t.is_finite() && self.l_t >= 0.0) {
            return bad("l_t must be non-negative");
        }
        if self.samples_per_quadrant == 0 || self.asymptote_samples == 0 {
            return bad("sample counts must be at least 1");
        }
        if !(self.slope_threshold.is_finite() && self.slope_threshold > 0.0) {
            return bad("slope_threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspRegion {
    Continuous,
    Asymptote,
}

/// A point on the offset cross-section, in section coordinates `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionSample {
    pub point: Vec2,
    pub tangent: Vec2,
    pub region: GraspRegion,
    /// Curve parameter of continuous samples, mirrored into their quadrant.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCandidate {
    /// Gripper frame → world.
    pub pose: Pose,
    pub source_sq: usize,
    pub region: GraspRegion,
    pub omega: Option<f64>,
    pub closing_width: f64,
    pub flipped: bool,
}

/// Candidates of one primitive plus the count dropped for exceeding the
/// gripper opening.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<GraspCandidate>,
    pub rejected_width: usize,
}

/// Index of the smallest semi-axis; ties prefer z, then y, then x.
pub fn shortest_axis(axes: &Vec3) -> usize {
    let mut best = 2;
    for k in [1, 0] {
        if axes[k] < axes[best] {
            best = k;
        }
    }
    best
}

/// In-plane axis indices `(u, v)` of the section perpendicular to `axis`.
pub fn section_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Shortest axis and the section frame: columns are the world `u`, `v` and
/// `u × v` directions (the last is ± the shortest axis), origin at the center.
pub fn shortest_axis_frame(sq: &Superquadric) -> (usize, Pose) {
    let axis = shortest_axis(&sq.axes);
    let (u, v) = section_axes(axis);
    let eu = sq.pose.rotation.column(u).into_owned();
    let ev = sq.pose.rotation.column(v).into_owned();
    (axis, Pose::from_columns(eu, ev, eu.cross(&ev), sq.center()))
}

/// Exponent of the section curve: ε₂ on the equatorial plane, ε₁ on the
/// meridian planes.
pub fn section_exponent(sq: &Superquadric, axis: usize) -> f64 {
    if axis == 2 {
        sq.eps2
    } else {
        sq.eps1
    }
}

/// Offset section point `((a_u + l_t)·cos^ε ω, (a_v + l_t)·sin^ε ω)`.
pub fn section_point(a_u: f64, a_v: f64, eps: f64, omega: f64, l_t: f64) -> Vec2 {
    Vec2::new(
        (a_u + l_t) * signed_pow(omega.cos(), eps),
        (a_v + l_t) * signed_pow(omega.sin(), eps),
    )
}

/// First-quadrant slope terms `(x'(ω), y'(ω))` used to locate the steep
/// regions: `x' = −a_u ε sin^(ε−1) ω`, `y' = a_v ε cos^(ε−1) ω`.
pub fn section_slopes(a_u: f64, a_v: f64, eps: f64, omega: f64) -> (f64, f64) {
    (
        -a_u * eps * omega.sin().powf(eps - 1.0),
        a_v * eps * omega.cos().powf(eps - 1.0),
    )
}

/// Angles `ω₁ < ω₂` where the slope terms reach `∓threshold`.
pub fn boundary_omegas(
    a_u: f64,
    a_v: f64,
    eps: f64,
    threshold: f64,
) -> Result<(f64, f64), GraspError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(GraspError::NoDiscontinuity(eps));
    }
    let p = 1.0 / (1.0 - eps);
    let s1 = (a_u * eps / threshold).powf(p);
    let c2 = (a_v * eps / threshold).powf(p);
    if !(s1 < 1.0 && c2 < 1.0) {
        return Err(GraspError::DegenerateBoundary { threshold });
    }
    let (w1, w2) = (s1.asin(), c2.acos());
    if w1 >= w2 {
        return Err(GraspError::DegenerateBoundary { threshold });
    }
    Ok((w1, w2))
}

fn curve_tangent(a_u: f64, a_v: f64, eps: f64, omega: f64) -> Vec2 {
    // derivative of the offset curve; the common factor ε is dropped
    let (c, s) = (omega.cos(), omega.sin());
    let t = Vec2::new(-a_u * c.powf(eps - 1.0) * s, a_v * s.powf(eps - 1.0) * c);
    t.try_normalize(0.0).unwrap_or_else(|| Vec2::new(-s, c))
}

fn continuous(
    a_u: f64,
    a_v: f64,
    eps: f64,
    l_t: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<SectionSample> {
    (0..n)
        .map(|j| {
            let omega = lo + (hi - lo) * (j as f64 + 0.5) / n as f64;
            SectionSample {
                point: section_point(a_u, a_v, eps, omega, l_t),
                tangent: curve_tangent(a_u + l_t, a_v + l_t, eps, omega),
                region: GraspRegion::Continuous,
                omega: Some(omega),
            }
        })
        .collect()
}

fn segment(from: Vec2, to: Vec2, n: usize) -> impl Iterator<Item = SectionSample> {
    let tangent = (to - from).normalize();
    (0..n).map(move |j| SectionSample {
        point: from + (to - from) * ((j as f64 + 0.5) / n as f64),
        tangent,
        region: GraspRegion::Asymptote,
        omega: None,
    })
}

/// Offset section samples in all four quadrants, in section coordinates.
///
/// The first quadrant is sampled at the midpoints of `n` equal steps in ω (on
/// `[ω₁, ω₂]` when the exponent is below one, plus the two asymptote
/// segments) and mirrored into the other quadrants in order.
pub fn sample_cross_section(sq: &Superquadric, config: &SamplingConfig) -> Vec<SectionSample> {
    let axis = shortest_axis(&sq.axes);
    let (u, v) = section_axes(axis);
    let (a_u, a_v) = (sq.axes[u], sq.axes[v]);
    let eps = section_exponent(sq, axis);
    let l = config.l_t;
    let n = config.samples_per_quadrant;

    let quadrant = match boundary_omegas(a_u, a_v, eps, config.slope_threshold) {
        Ok((w1, w2)) => {
            let mut q = continuous(a_u, a_v, eps, l, w1, w2, n);
            let m = config.asymptote_samples;
            let b1 = section_point(a_u, a_v, eps, w1, l);
            let b2 = section_point(a_u, a_v, eps, w2, l);
            q.extend(segment(b1, Vec2::new(a_u + l, 0.0), m));
            q.extend(segment(b2, Vec2::new(0.0, a_v + l), m));
            q
        }
        // no steep region, or the threshold is never reached
        Err(_) => continuous(a_u, a_v, eps, l, 0.0, FRAC_PI_2, n),
    };

    // sign flips of (u, v) and the matching map of ω
    type Mirror = (f64, f64, fn(f64) -> f64);
    let mirrors: [Mirror; 4] = [
        (1.0, 1.0, |w| w),
        (-1.0, 1.0, |w| PI - w),
        (-1.0, -1.0, |w| PI + w),
        (1.0, -1.0, |w| -w),
    ];
    let mut out = Vec::with_capacity(4 * quadrant.len());
    for (su, sv, angle) in mirrors {
        let flip = Vec2::new(su, sv);
        out.extend(quadrant.iter().map(|s| SectionSample {
            point: s.point.component_mul(&flip),
            tangent: s.tangent.component_mul(&flip),
            region: s.region,
            omega: s.omega.map(angle),
        }));
    }
    out
}

/// Lifts section samples into gripper poses on primitive `index`.
///
/// The gripper closes along the shortest axis; its approach axis points from
/// the sample toward the primitive center. With `generate_flipped` every pose
/// also appears rotated by π about the approach axis.
pub fn candidates_on_sq(
    sq: &Superquadric,
    index: usize,
    gripper: &GripperModel,
    config: &SamplingConfig,
) -> CandidateSet {
    let samples = sample_cross_section(sq, config);
    let per_sample = if config.generate_flipped { 2 } else { 1 };
    let (axis, frame) = shortest_axis_frame(sq);
    let width = 2.0 * sq.axes[axis] + 2.0 * config.l_t;
    if width > gripper.max_opening {
        return CandidateSet {
            candidates: Vec::new(),
            rejected_width: samples.len() * per_sample,
        };
    }
    let closing = frame.axis(2);
    let mut candidates = Vec::with_capacity(samples.len() * per_sample);
    for s in &samples {
        let offset = frame.axis(0) * s.point.x + frame.axis(1) * s.point.y;
        let approach = -offset.normalize();
        let side = approach.cross(&closing);
        let center = frame.translation + offset;
        let base = GraspCandidate {
            pose: Pose::from_columns(closing, side, approach, center),
            source_sq: index,
            region: s.region,
            omega: s.omega,
            closing_width: width,
            flipped: false,
        };
        candidates.push(base);
        if config.generate_flipped {
            candidates.push(GraspCandidate {
                pose: Pose::from_columns(-closing, -side, approach, center),
                flipped: true,
                ..base
            });
        }
    }
    CandidateSet {
        candidates,
        rejected_width: 0,
    }
}

/// Serialized grasp candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub source_sq: usize,
    pub closing_width: f64,
    pub region_tag: GraspRegion,
    pub omega: Option<f64>,
    pub flipped: bool,
}

impl From<&GraspCandidate> for CandidateRecord {
    fn from(c: &GraspCandidate) -> Self {
        let pose = PoseRecord::from(&c.pose);
        Self {
            rotation: pose.rotation,
            translation: pose.translation,
            source_sq: c.source_sq,
            closing_width: c.closing_width,
            region_tag: c.region,
            omega: c.omega,
            flipped: c.flipped,
        }
    }
}

impl TryFrom<CandidateRecord> for GraspCandidate {
    type Error = PoseError;

    fn try_from(r: CandidateRecord) -> Result<Self, PoseError> {
        Ok(Self {
            pose: Pose::try_from(PoseRecord {
                rotation: r.rotation,
                translation: r.translation,
            })?,
            source_sq: r.source_sq,
            region: r.region_tag,
            omega: r.omega,
            closing_width: r.closing_width,
            flipped: r.flipped,
        })
    }
}

#[cfg(test)]
mod tests;
