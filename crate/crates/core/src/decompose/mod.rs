//! Decomposition of a signed distance grid into superquadrics by marching
//! isolevels from the deepest uncovered voxel and fitting one primitive per
//! grown region.

mod fit;

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, PointSet, Pose, Vec3};
use crate::sdfgrid::SdfGrid;
use crate::superquadric::{Superquadric, EXPONENT_MAX, EXPONENT_MIN};
use fit::{levenberg_marquardt, residuals, rms_residual, samples_from, Sample};

/// Free parameters of a superquadric: three axes, two exponents, six pose.
pub const PARAMETER_COUNT: usize = 11;

#[derive(Debug, thiserror::Error)]
pub enum DecomposeError {
    #[error("invalid decomposition config: {0}")]
    InvalidConfig(String),
    #[error("grid has no interior voxels")]
    EmptyObject,
    #[error("{active} active voxels cannot determine {required} parameters")]
    InsufficientData { active: usize, required: usize },
    #[error("fit diverged to a non-finite objective")]
    Numerical { last: Box<Superquadric> },
    #[error("no primitive passed the acceptance test")]
    NoPrimitives,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub max_primitives: usize,
    /// Defaults to 1.5 × grid spacing.
    pub residual_tolerance: Option<f64>,
    pub interior_coverage_stop: f64,
    pub exponent_bounds: [f64; 2],
    /// Defaults to [2 × spacing, object bounding-box diagonal].
    pub axis_bounds: Option<[f64; 2]>,
    pub max_fit_iterations: usize,
    /// Fits use at most this many voxels, taken by a regular stride.
    pub max_active_voxels: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            max_primitives: 50,
            residual_tolerance: None,
            interior_coverage_stop: 0.99,
            exponent_bounds: [EXPONENT_MIN, EXPONENT_MAX],
            axis_bounds: None,
            max_fit_iterations: 200,
            max_active_voxels: 6000,
        }
    }
}

impl DecompositionConfig {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        let fail = |m: &str| Err(DecomposeError::InvalidConfig(m.to_string()));
        if self.max_primitives == 0 {
            return fail("max_primitives must be at least 1");
        }
        if !(self.interior_coverage_stop > 0.0 && self.interior_coverage_stop <= 1.0) {
            return fail("interior_coverage_stop must lie in (0, 1]");
        }
        if matches!(self.residual_tolerance, Some(t) if !(t > 0.0 && t.is_finite())) {
            return fail("residual_tolerance must be positive");
        }
        let [lo, hi] = self.exponent_bounds;
        if !(lo > 0.0 && lo <= hi && hi < 2.0) {
            return fail("exponent_bounds must satisfy 0 < lo ≤ hi < 2");
        }
        if let Some([lo, hi]) = self.axis_bounds {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return fail("axis_bounds must satisfy 0 < lo ≤ hi");
            }
        }
        if self.max_fit_iterations == 0 {
            return fail("max_fit_iterations must be at least 1");
        }
        if self.max_active_voxels < PARAMETER_COUNT {
            return fail("max_active_voxels must be at least 11");
        }
        Ok(())
    }

    pub fn residual_tolerance_for(&self, grid: &SdfGrid) -> f64 {
        self.residual_tolerance.unwrap_or(1.5 * grid.spacing())
    }

    fn bounds_for(&self, grid: &SdfGrid) -> FitBounds {
        let axes = self.axis_bounds.unwrap_or_else(|| {
            let lo = 2.0 * grid.spacing();
            [lo, object_diagonal(grid).max(lo)]
        });
        FitBounds {
            axes,
            exponents: self.exponent_bounds,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FitBounds {
    pub axes: [f64; 2],
    pub exponents: [f64; 2],
}

/// Diagonal of the box spanned by interior voxels, grown by one voxel.
fn object_diagonal(grid: &SdfGrid) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for i in 0..grid.len() {
        if grid.value(i) < 0.0 {
            let c = grid.center(i);
            lo = lo.inf(&c);
            hi = hi.sup(&c);
        }
    }
    if lo.x > hi.x {
        return grid.bounds().diagonal();
    }
    (hi - lo + Vec3::repeat(grid.spacing())).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub primitives: Vec<Superquadric>,
    /// RMS residual of each primitive's fit.
    pub residuals: Vec<f64>,
    /// Fraction of interior voxels covered.
    pub coverage: f64,
    /// Primitive that first covered each voxel.
    pub assignment: Vec<Option<u32>>,
}

/// Fits one superquadric to the grid values at `active` voxels, starting from
/// `init`. Returns the best iterate and its RMS residual over the active set.
pub fn fit_superquadric(
    grid: &SdfGrid,
    active: &[usize],
    init: &Superquadric,
    config: &DecompositionConfig,
) -> Result<(Superquadric, f64), DecomposeError> {
    config.validate()?;
    if active.len() < PARAMETER_COUNT {
        return Err(DecomposeError::InsufficientData {
            active: active.len(),
            required: PARAMETER_COUNT,
        });
    }
    let samples = samples_from(grid, &subsample(active, config.max_active_voxels));
    let bounds = config.bounds_for(grid);
    let (sq, _) = levenberg_marquardt(
        &samples,
        None,
        init,
        &bounds,
        grid.truncation(),
        config.max_fit_iterations,
    )?;
    Ok((sq, rms_residual(&sq, &samples, grid.truncation())))
}

/// Weighted objective of `sq` over the (stride-subsampled) active voxels.
pub fn fit_objective(
    grid: &SdfGrid,
    active: &[usize],
    sq: &Superquadric,
    config: &DecompositionConfig,
) -> f64 {
    let samples = samples_from(grid, &subsample(active, config.max_active_voxels));
    fit::cost(sq, &samples, None, grid.truncation())
}

fn subsample(voxels: &[usize], cap: usize) -> Vec<usize> {
    if voxels.len() <= cap {
        return voxels.to_vec();
    }
    (0..cap).map(|k| voxels[k * voxels.len() / cap]).collect()
}

/// Robust variant used by the decomposition loop. From a region-wide start, a
/// plain fit runs first and samples are then reweighted with a Cauchy kernel
/// whose width shrinks with the residual spread. From a local start only the
/// samples the primitive over-predicts are discounted (see [`union_weight`]),
/// with a narrow fixed kernel, so the primitive grows along one part of a
/// region that spans several. The RMS residual
/// is reported over the samples the final fit explains.
fn fit_region(
    grid: &SdfGrid,
    active: &[usize],
    init: &Superquadric,
    config: &DecompositionConfig,
    local: bool,
) -> Result<(Superquadric, f64), DecomposeError> {
    if active.len() < PARAMETER_COUNT {
        return Err(DecomposeError::InsufficientData {
            active: active.len(),
            required: PARAMETER_COUNT,
        });
    }
    let samples = samples_from(grid, &subsample(active, config.max_active_voxels));
    let mut bounds = config.bounds_for(grid);
    // data only constrains the primitive within the active set's extent
    let extent = Aabb::from_points(samples.iter().map(|s| &s.point)).diagonal() / 2.0;
    bounds.axes[1] = bounds.axes[1].min(extent).max(bounds.axes[0]);
    let delta = grid.truncation();
    let floor = 2.0 * grid.spacing();
    let mut sq = *init;
    let mut width = f64::INFINITY;
    if local {
        width = floor;
    } else {
        sq = levenberg_marquardt(
            &samples,
            None,
            init,
            &bounds,
            delta,
            config.max_fit_iterations,
        )?
        .0;
    }
    let rounds = if local { 16 } else { 0 };
    let round_iterations = (config.max_fit_iterations / 4).max(10);
    for _ in 0..rounds {
        let r = residuals(&sq, &samples, delta);
        if !local {
            let mut abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
            abs.sort_by(f64::total_cmp);
            let mad = 1.4826 * abs[abs.len() / 2];
            width = (0.5 * width).min(mad).max(floor);
        }
        let u: Vec<f64> = r
            .iter()
            .map(|&v| {
                if local {
                    union_weight(v, width)
                } else {
                    cauchy(v, width)
                }
            })
            .collect();
        match levenberg_marquardt(&samples, Some(&u), &sq, &bounds, delta, round_iterations) {
            Ok((next, _)) => {
                let moved = (next.axes - sq.axes).norm() + (next.center() - sq.center()).norm();
                sq = next;
                if moved < 1e-3 * grid.spacing() {
                    break;
                }
            }
            Err(DecomposeError::Numerical { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let r = residuals(&sq, &samples, delta);
    let inliers: Vec<Sample> = samples
        .iter()
        .zip(&r)
        .filter(|(_, v)| **v > -3.0 * width && (local || **v < 3.0 * width))
        .map(|(s, _)| *s)
        .collect();
    if inliers.len() < PARAMETER_COUNT {
        return Ok((sq, f64::INFINITY));
    }
    Ok((sq, rms_residual(&sq, &inliers, delta)))
}

/// The grid holds the minimum over all parts, so a voxel whose value lies
/// below this primitive's distance may belong to another part and is
/// discounted; a value above it means the primitive claims empty space.
fn union_weight(residual: f64, width: f64) -> f64 {
    if residual >= 0.0 {
        1.0
    } else {
        cauchy(residual, width)
    }
}

fn cauchy(residual: f64, width: f64) -> f64 {
    1.0 / (1.0 + (residual / width).powi(2))
}

/// Largest accepted fraction of a primitive's interior lying clearly outside
/// the object.
const MAX_OUTSIDE_FRACTION: f64 = 0.1;
/// Smallest share of a primitive's interior footprint that must be newly
/// covered for it to be kept.
const MIN_NOVELTY: f64 = 0.2;

/// Fraction of the voxels inside `sq` whose grid value exceeds one spacing.
pub fn outside_fraction(grid: &SdfGrid, sq: &Superquadric) -> f64 {
    // the grid has no data beyond its domain, so a surface that leaves it is
    // unsupported
    let domain = grid.bounds();
    if sq
        .surface_samples(12, 24)
        .iter()
        .any(|p| !domain.contains(p))
    {
        return 1.0;
    }
    let r = sq.bounding_radius();
    let lo = (sq.center() - Vec3::repeat(r) - grid.origin()) / grid.spacing();
    let hi = (sq.center() + Vec3::repeat(r) - grid.origin()) / grid.spacing();
    let dims = grid.dims();
    let range = |k: usize| {
        let a = lo[k].floor().max(0.0) as usize;
        let b = (hi[k].ceil().max(0.0) as usize).min(dims[k] - 1);
        a..=b
    };
    let (mut inside, mut outside) = (0usize, 0usize);
    for iz in range(2) {
        for iy in range(1) {
            for ix in range(0) {
                let i = grid.index(ix, iy, iz);
                if sq.signed_distance(&grid.center(i)) < 0.0 {
                    inside += 1;
                    if grid.value(i) > grid.spacing() {
                        outside += 1;
                    }
                }
            }
        }
    }
    if inside == 0 {
        return 1.0;
    }
    outside as f64 / inside as f64
}

/// Centroid and principal axes of the voxel centers; semi-axes are twice the
/// standard deviation along each principal direction, exponents start at 1.
/// Eigenvalue ratio above which two principal directions are treated as
/// interchangeable.
const DEGENERATE_RATIO: f64 = 0.8;

/// Rotates the pair `cols[i]`, `cols[j]` within their plane to maximize the
/// cross moment Σu²v², which aligns square sections with their faces.
fn align_in_plane(offsets: &[Vec3], cols: &mut [Vec3; 3], i: usize, j: usize) {
    const STEPS: usize = 90;
    let (a, b) = (cols[i], cols[j]);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..STEPS {
        let t = std::f64::consts::FRAC_PI_2 * k as f64 / STEPS as f64;
        let (u, v) = (a * t.cos() + b * t.sin(), b * t.cos() - a * t.sin());
        let m: f64 = offsets
            .iter()
            .map(|d| (d.dot(&u) * d.dot(&v)).powi(2))
            .sum();
        if m > best.0 * (1.0 + 1e-9) {
            best = (m, t);
        }
    }
    let t = best.1;
    cols[i] = a * t.cos() + b * t.sin();
    cols[j] = b * t.cos() - a * t.sin();
}

pub fn moment_init(grid: &SdfGrid, voxels: &[usize], bounds_lo: f64) -> Superquadric {
    let n = voxels.len().max(1) as f64;
    let centroid = voxels.iter().map(|&i| grid.center(i)).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for &i in voxels {
        let d = grid.center(i) - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut cols = order.map(|k| eig.eigenvectors.column(k).into_owned());
    let offsets: Vec<Vec3> = voxels.iter().map(|&i| grid.center(i) - centroid).collect();
    for (i, j) in [(0, 1), (1, 2)] {
        let (hi, lo) = (eig.eigenvalues[order[i]], eig.eigenvalues[order[j]]);
        if lo > DEGENERATE_RATIO * hi {
            align_in_plane(&offsets, &mut cols, i, j);
        }
    }
    if cols[0].cross(&cols[1]).dot(&cols[2]) < 0.0 {
        cols[2] = -cols[2];
    }
    let axes = Vec3::from(cols.map(|c| {
        let var = offsets.iter().map(|d| d.dot(&c).powi(2)).sum::<f64>() / n;
        (2.0 * var.sqrt()).max(bounds_lo)
    }));
    Superquadric {
        axes,
        eps1: 1.0,
        eps2: 1.0,
        pose: Pose::from_columns(cols[0], cols[1], cols[2], centroid),
    }
}

struct March<'a> {
    grid: &'a SdfGrid,
    covered: Vec<bool>,
    excluded: Vec<bool>,
}

impl March<'_> {
    /// Connected uncovered voxels with value ≤ `level` reachable from `seed`.
    fn grow(&self, seed: usize, level: f64) -> Vec<usize> {
        let mut seen = vec![false; self.grid.len()];
        let mut out = vec![seed];
        seen[seed] = true;
        let mut head = 0;
        while head < out.len() {
            let i = out[head];
            head += 1;
            self.grid.for_each_neighbor(i, |j| {
                if !seen[j] && !self.covered[j] && self.grid.value(j) <= level {
                    seen[j] = true;
                    out.push(j);
                }
            });
        }
        out
    }

    /// Region around `seed` at the highest isolevel reached before the
    /// region crosses a neck: rising one level should only add a shell around
    /// the previous region, so new voxels far from it mean another part (or
    /// another basin) has joined.
    fn region(&self, seed: usize) -> (Vec<usize>, f64) {
        let spacing = self.grid.spacing();
        let mut level = self.grid.value(seed) + 0.25 * spacing;
        let mut region = self.grow(seed, level);
        let mut dist = vec![u32::MAX - 1; self.grid.len()];
        loop {
            let next = 0.5 * level;
            if next.abs() < 0.5 * spacing || next >= 0.0 {
                break;
            }
            let grown = self.grow(seed, next);
            // a shell of width Δ is at most 3Δ away in face-adjacent steps
            let allowed = (3.0 * (next - level).abs() / spacing).ceil() as u32 + 2;
            if self.shell_depth(&region, &grown, &mut dist) > allowed {
                break;
            }
            region = grown;
            level = next;
        }
        (region, level)
    }

    /// Largest step count from `inner` to any voxel of `outer` ⊇ `inner`,
    /// walking inside `outer`.
    fn shell_depth(&self, inner: &[usize], outer: &[usize], dist: &mut [u32]) -> u32 {
        const UNSEEN: u32 = u32::MAX;
        const OUTSIDE: u32 = u32::MAX - 1;
        for &i in outer {
            dist[i] = UNSEEN;
        }
        let mut queue = VecDeque::new();
        for &i in inner {
            dist[i] = 0;
            queue.push_back(i);
        }
        let mut deepest = 0;
        while let Some(i) = queue.pop_front() {
            let d = dist[i];
            deepest = deepest.max(d);
            self.grid.for_each_neighbor(i, |j| {
                if dist[j] == UNSEEN {
                    dist[j] = d + 1;
                    queue.push_back(j);
                }
            });
        }
        for &i in outer {
            dist[i] = OUTSIDE;
        }
        deepest
    }

    /// Moment initialization from the part of the level region within a few
    /// local thicknesses of the seed.
    fn local_init(&self, seed: usize, level: f64, bounds_lo: f64) -> Superquadric {
        let reach = (3.0 * self.grid.value(seed).abs() / self.grid.spacing())
            .ceil()
            .max(3.0) as u32;
        let mut dist = std::collections::HashMap::new();
        dist.insert(seed, 0u32);
        let mut queue = VecDeque::from([seed]);
        let mut patch = vec![seed];
        while let Some(i) = queue.pop_front() {
            let d = dist[&i];
            if d >= reach {
                continue;
            }
            self.grid.for_each_neighbor(i, |j| {
                if !self.covered[j] && self.grid.value(j) <= level && !dist.contains_key(&j) {
                    dist.insert(j, d + 1);
                    patch.push(j);
                    queue.push_back(j);
                }
            });
        }
        moment_init(self.grid, &patch, bounds_lo)
    }

    /// Region dilated by `steps` voxels through exterior voxels and through
    /// uncovered interior voxels of rising value.
    fn dilate(&self, region: &[usize], steps: usize) -> Vec<usize> {
        let mut dist = vec![u32::MAX; self.grid.len()];
        let mut queue = VecDeque::new();
        for &i in region {
            dist[i] = 0;
            queue.push_back(i);
        }
        let mut out = region.to_vec();
        while let Some(i) = queue.pop_front() {
            let d = dist[i];
            if d as usize >= steps {
                continue;
            }
            self.grid.for_each_neighbor(i, |j| {
                let vj = self.grid.value(j);
                // interior voxels only along ascending values, so the band
                // does not run down into adjoining parts
                let open = vj >= 0.0 || (!self.covered[j] && vj > self.grid.value(i));
                if dist[j] == u32::MAX && open {
                    dist[j] = d + 1;
                    out.push(j);
                    queue.push_back(j);
                }
            });
        }
        out.sort_unstable();
        out
    }
}

/// Runs the decomposition loop until the interior coverage target, the
/// primitive cap, or three consecutive rounds without progress.
pub fn marching_primitives(
    grid: &SdfGrid,
    config: &DecompositionConfig,
) -> Result<Decomposition, DecomposeError> {
    config.validate()?;
    let mut interior = grid.interior();
    if interior.is_empty() {
        return Err(DecomposeError::EmptyObject);
    }
    interior.sort_by(|&a, &b| grid.value(a).total_cmp(&grid.value(b)).then(a.cmp(&b)));
    let bounds = config.bounds_for(grid);
    let tolerance = config.residual_tolerance_for(grid);
    let spacing = grid.spacing();

    let mut march = March {
        grid,
        covered: vec![false; grid.len()],
        excluded: vec![false; grid.len()],
    };
    let mut assignment = vec![None; grid.len()];
    let mut primitives = Vec::new();
    let mut fit_residuals = Vec::new();
    let mut covered_count = 0usize;
    let mut cursor = 0usize;
    let mut stalled = 0;

    while primitives.len() < config.max_primitives
        && (covered_count as f64) < config.interior_coverage_stop * interior.len() as f64
        && stalled < 3
    {
        while cursor < interior.len()
            && (march.covered[interior[cursor]] || march.excluded[interior[cursor]])
        {
            cursor += 1;
        }
        let Some(&seed) = interior.get(cursor) else {
            break;
        };
        // seeds come deepest first; what is left is a one-voxel surface shell
        if grid.value(seed) > -spacing {
            break;
        }
        let (region, level) = march.region(seed);
        // reach the surface, then half the truncation band beyond it
        let steps = ((level.abs() + 0.5 * grid.truncation()) / spacing).ceil() as usize;
        let active = march.dilate(&region, steps);
        let inside: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| grid.value(i) < 0.0)
            .collect();
        let mut accepted = false;
        for local in [false, true] {
            let init = if local {
                march.local_init(seed, level, bounds.axes[0])
            } else {
                let source = if inside.len() >= PARAMETER_COUNT {
                    &inside
                } else {
                    &region
                };
                moment_init(grid, source, bounds.axes[0])
            };
            let (sq, rms) = match fit_region(grid, &active, &init, config, local) {
                Ok(fit) => fit,
                Err(DecomposeError::InsufficientData { .. })
                | Err(DecomposeError::Numerical { .. }) => continue,
                Err(e) => return Err(e),
            };
            let outside = outside_fraction(grid, &sq);
            log::debug!(
                "seed {seed} level {level:.4} region {} active {} local {local} rms {rms:.4} outside {outside:.3} a {:.3?} e {:.2} {:.2} c {:.3?}",
                region.len(),
                active.len(), sq.axes.as_slice(), sq.eps1, sq.eps2, sq.center().as_slice(),
            );
            if rms >= 4.0 * tolerance || outside > MAX_OUTSIDE_FRACTION {
                continue;
            }
            let (newly, footprint) = newly_covered(grid, &sq, &interior, &march.covered);
            if newly.is_empty() || (newly.len() as f64) < MIN_NOVELTY * footprint as f64 {
                continue;
            }
            let index = primitives.len() as u32;
            for &i in &newly {
                march.covered[i] = true;
                assignment[i] = Some(index);
            }
            covered_count += newly.len();
            primitives.push(sq);
            fit_residuals.push(rms);
            accepted = true;
            break;
        }
        if accepted {
            stalled = 0;
        } else {
            stalled += 1;
            for &i in &region {
                march.excluded[i] = true;
            }
        }
    }

    if primitives.is_empty() {
        return Err(DecomposeError::NoPrimitives);
    }
    Ok(Decomposition {
        primitives,
        residuals: fit_residuals,
        coverage: covered_count as f64 / interior.len() as f64,
        assignment,
    })
}

/// Uncovered interior voxels (from `candidates`) within one spacing of `sq`,
/// and the count of all such voxels, covered or not.
fn newly_covered(
    grid: &SdfGrid,
    sq: &Superquadric,
    candidates: &[usize],
    covered: &[bool],
) -> (Vec<usize>, usize) {
    let reach = sq.bounding_radius() + grid.spacing();
    let center = sq.center();
    let mut footprint = 0;
    let mut newly = Vec::new();
    for &i in candidates {
        let c = grid.center(i);
        if (c - center).norm() <= reach && sq.signed_distance(&c) < grid.spacing() {
            footprint += 1;
            if !covered[i] {
                newly.push(i);
            }
        }
    }
    (newly, footprint)
}

/// Interior coverage of the union of `primitives` and the largest distance
/// from their surfaces to the grid's zero level.
pub fn coverage_report(primitives: &[Superquadric], grid: &SdfGrid) -> (f64, f64) {
    let interior = grid.interior();
    let coverage = if interior.is_empty() {
        0.0
    } else {
        let covered = interior
            .iter()
            .filter(|&&i| {
                let c = grid.center(i);
                primitives
                    .iter()
                    .any(|sq| sq.signed_distance(&c) < grid.spacing())
            })
            .count();
        covered as f64 / interior.len() as f64
    };
    let zero = PointSet::new(zero_crossings(grid));
    let mut hausdorff: f64 = 0.0;
    for sq in primitives {
        for p in sq.surface_samples(24, 48) {
            let d = zero.nearest(&p).map_or(f64::INFINITY, |(_, d)| d);
            hausdorff = hausdorff.max(d);
        }
    }
    (coverage, hausdorff)
}

/// Linear zero crossings along grid edges between voxels of opposite sign.
pub fn zero_crossings(grid: &SdfGrid) -> Vec<Vec3> {
    let [nx, ny, nz] = grid.dims();
    let stride = [1, nx, nx * ny];
    let mut out = Vec::new();
    for i in 0..grid.len() {
        let c = grid.coords(i);
        let a = grid.value(i);
        for axis in 0..3 {
            if c[axis] + 1 >= [nx, ny, nz][axis] {
                continue;
            }
            let j = i + stride[axis];
            let b = grid.value(j);
            if (a < 0.0) != (b < 0.0) {
                let t = a / (a - b);
                out.push(grid.center(i) + (grid.center(j) - grid.center(i)) * t);
            }
        }
    }
    out
}

/// Summary written next to the primitive set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub coverage: f64,
    pub hausdorff_out: f64,
    pub residuals: Vec<f64>,
    pub runtime_ms: u64,
}

/// Runs the decomposition and its quality report, timing the whole.
pub fn decompose_with_report(
    grid: &SdfGrid,
    config: &DecompositionConfig,
) -> Result<(Decomposition, DecompositionReport), DecomposeError> {
    let start = Instant::now();
    let decomposition = marching_primitives(grid, config)?;
    let (coverage, hausdorff_out) = coverage_report(&decomposition.primitives, grid);
    let report = DecompositionReport {
        coverage,
        hausdorff_out,
        residuals: decomposition.residuals.clone(),
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok((decomposition, report))
}
