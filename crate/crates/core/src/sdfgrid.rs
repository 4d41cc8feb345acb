//! Truncated signed distance grids sampled at voxel centers.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::geometry::{Aabb, TriangleMesh, Vec3};

pub const MIN_RESOLUTION: usize = 16;
pub const MAX_RESOLUTION: usize = 512;
pub const DEFAULT_RESOLUTION: usize = 100;
pub const DEFAULT_TRUNCATION_FACTOR: f64 = 10.0;
/// Empty voxels added around the mesh bounding box on every side.
pub const MARGIN_VOXELS: usize = 3;

const MAGIC: &[u8; 6] = b"SQSDF1";

#[derive(Debug, thiserror::Error)]
pub enum SdfError {
    #[error("target resolution {0} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]")]
    ResolutionOutOfRange(usize),
    #[error("truncation factor must be positive and finite, got {0}")]
    InvalidTruncation(f64),
    #[error("point ({:.6}, {:.6}, {:.6}) lies outside the grid", point.x, point.y, point.z)]
    OutOfDomain { point: Vec3, clamped: f64 },
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Voxel grid of clamped signed distances. Values are stored x-fastest:
/// index = ix + nx·(iy + ny·iz).
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    truncation: f64,
    values: Vec<f64>,
}

/// Builds the grid of `mesh` with `target_resolution` voxels along the longest
/// bounding-box side and truncation `truncation_factor × spacing`.
pub fn build_sdf(
    mesh: &TriangleMesh,
    target_resolution: usize,
    truncation_factor: f64,
) -> Result<SdfGrid, SdfError> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&target_resolution) {
        return Err(SdfError::ResolutionOutOfRange(target_resolution));
    }
    if !(truncation_factor.is_finite() && truncation_factor > 0.0) {
        return Err(SdfError::InvalidTruncation(truncation_factor));
    }
    let bounds = mesh.bounds();
    let spacing = bounds.longest_side() / target_resolution as f64;
    let delta = truncation_factor * spacing;
    let extent = bounds.extent();
    let dims = [0, 1, 2].map(|i| (extent[i] / spacing).ceil() as usize + 2 * MARGIN_VOXELS + 1);
    let origin = bounds.min - Vec3::repeat(MARGIN_VOXELS as f64 * spacing);
    let mut grid = SdfGrid {
        origin,
        spacing,
        dims,
        truncation: delta,
        values: vec![0.0; dims[0] * dims[1] * dims[2]],
    };

    let slice = dims[0] * dims[1];
    // distances first; `None` marks voxels at least δ from the surface
    let near: Vec<Option<f64>> = (0..grid.values.len())
        .into_par_iter()
        .with_min_len(slice)
        .map(|i| mesh.unsigned_distance_within(&grid.center(i), delta))
        .collect();

    let signs: Vec<bool> = if truncation_factor > 0.5 {
        far_field_signs(&grid, mesh, &near)
    } else {
        vec![false; near.len()]
    };

    grid.values
        .par_iter_mut()
        .with_min_len(slice)
        .enumerate()
        .for_each(|(i, v)| {
            *v = match near[i] {
                Some(d) if d < 1e-12 => 0.0,
                Some(d) => {
                    if mesh.contains(&grid_center(origin, spacing, dims, i)) {
                        -d
                    } else {
                        d
                    }
                }
                None if truncation_factor > 0.5 => {
                    if signs[i] {
                        -delta
                    } else {
                        delta
                    }
                }
                None => {
                    if mesh.contains(&grid_center(origin, spacing, dims, i)) {
                        -delta
                    } else {
                        delta
                    }
                }
            };
        });
    Ok(grid)
}

/// Inside flags for far voxels. Two face-adjacent voxels that are both at least
/// δ > spacing/2 from the surface cannot be separated by it, so one winding
/// query per connected far component suffices.
fn far_field_signs(grid: &SdfGrid, mesh: &TriangleMesh, near: &[Option<f64>]) -> Vec<bool> {
    let mut inside = vec![false; near.len()];
    let mut seen = vec![false; near.len()];
    let mut queue = VecDeque::new();
    for start in 0..near.len() {
        if near[start].is_some() || seen[start] {
            continue;
        }
        let sign = mesh.contains(&grid.center(start));
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            inside[i] = sign;
            grid.for_each_neighbor(i, |j| {
                if near[j].is_none() && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            });
        }
    }
    inside
}

fn grid_center(origin: Vec3, spacing: f64, dims: [usize; 3], i: usize) -> Vec3 {
    let ix = i % dims[0];
    let iy = (i / dims[0]) % dims[1];
    let iz = i / (dims[0] * dims[1]);
    origin + Vec3::new(ix as f64, iy as f64, iz as f64) * spacing
}

impl SdfGrid {
    /// Grid sampled from an arbitrary signed distance function.
    pub fn from_fn<F>(origin: Vec3, spacing: f64, dims: [usize; 3], truncation: f64, sdf: F) -> Self
    where
        F: Fn(&Vec3) -> f64 + Sync,
    {
        assert!(spacing > 0.0 && truncation > 0.0);
        assert!(dims.iter().all(|&n| n >= 2));
        let values = (0..dims[0] * dims[1] * dims[2])
            .into_par_iter()
            .map(|i| sdf(&grid_center(origin, spacing, dims, i)).clamp(-truncation, truncation))
            .collect();
        Self {
            origin,
            spacing,
            dims,
            truncation,
            values,
        }
    }

    /// Grid covering `bounds` plus the standard margin, sampled from `sdf`.
    pub fn from_fn_in_bounds<F>(bounds: &Aabb, spacing: f64, truncation: f64, sdf: F) -> Self
    where
        F: Fn(&Vec3) -> f64 + Sync,
    {
        let extent = bounds.extent();
        let dims = [0, 1, 2].map(|i| (extent[i] / spacing).ceil() as usize + 2 * MARGIN_VOXELS + 1);
        let origin = bounds.min - Vec3::repeat(MARGIN_VOXELS as f64 * spacing);
        Self::from_fn(origin, spacing, dims, truncation, sdf)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn center(&self, i: usize) -> Vec3 {
        grid_center(self.origin, self.spacing, self.dims, i)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Box spanned by the voxel centers.
    pub fn bounds(&self) -> Aabb {
        let last = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        );
        Aabb::new(self.origin, self.origin + last * self.spacing)
    }

    /// Indices of voxels with negative value.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] < 0.0)
            .collect()
    }

    /// Calls `visit` with each face-adjacent voxel index.
    pub fn for_each_neighbor<F: FnMut(usize)>(&self, i: usize, mut visit: F) {
        let [ix, iy, iz] = self.coords(i);
        let [nx, ny, nz] = self.dims;
        let stride = [1, nx, nx * ny];
        for (axis, (&c, &n)) in [ix, iy, iz].iter().zip(&[nx, ny, nz]).enumerate() {
            if c > 0 {
                visit(i - stride[axis]);
            }
            if c + 1 < n {
                visit(i + stride[axis]);
            }
        }
    }

    /// Trilinear interpolation of the eight voxels around `p`. Outside the
    /// grid, the error carries the value at the nearest in-grid point.
    pub fn query_trilinear(&self, p: &Vec3) -> Result<f64, SdfError> {
        let b = self.bounds();
        if b.contains(p) {
            Ok(self.interpolate(p))
        } else {
            let q = Vec3::new(
                p.x.clamp(b.min.x, b.max.x),
                p.y.clamp(b.min.y, b.max.y),
                p.z.clamp(b.min.z, b.max.z),
            );
            Err(SdfError::OutOfDomain {
                point: *p,
                clamped: self.interpolate(&q),
            })
        }
    }

    fn interpolate(&self, p: &Vec3) -> f64 {
        let local = (p - self.origin) / self.spacing;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let cell = local[k].floor().clamp(0.0, (self.dims[k] - 2) as f64);
            base[k] = cell as usize;
            frac[k] = (local[k] - cell).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3)
                .map(|k| if o[k] == 1 { frac[k] } else { 1.0 - frac[k] })
                .product();
            if w != 0.0 {
                acc += w * self.values[self.index(base[0] + o[0], base[1] + o[1], base[2] + o[2])];
            }
        }
        acc
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        for n in self.dims {
            out.write_all(&(n as u32).to_le_bytes())?;
        }
        for v in [
            self.origin.x,
            self.origin.y,
            self.origin.z,
            self.spacing,
            self.truncation,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, SdfError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let header = MAGIC.len() + 3 * 4 + 5 * 8;
        if bytes.len() < header || &bytes[..MAGIC.len()] != MAGIC {
            return Err(SdfError::Format("missing SQSDF1 header".into()));
        }
        let mut at = MAGIC.len();
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
            at += 4;
        }
        let mut scalars = [0.0f64; 5];
        for s in &mut scalars {
            *s = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            at += 8;
        }
        let [ox, oy, oz, spacing, truncation] = scalars;
        if dims.iter().any(|&n| n < 2)
            || spacing.is_nan()
            || spacing <= 0.0
            || truncation.is_nan()
            || truncation <= 0.0
        {
            return Err(SdfError::Format("invalid grid header".into()));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|n| n.checked_mul(dims[2]))
            .ok_or_else(|| SdfError::Format("grid dimensions overflow".into()))?;
        if bytes.len() - at != count * 4 {
            return Err(SdfError::Format(format!(
                "expected {} value bytes, found {}",
                count * 4,
                bytes.len() - at
            )));
        }
        let values = bytes[at..]
            .chunks_exact(4)
            .map(|c| {
                (f32::from_le_bytes(c.try_into().unwrap()) as f64).clamp(-truncation, truncation)
            })
            .collect();
        Ok(Self {
            origin: Vec3::new(ox, oy, oz),
            spacing,
            dims,
            truncation,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SdfError> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SdfError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn unit_cube_grid() {
        let mesh = fixtures::cube(1.0);
        let grid = build_sdf(&mesh, 32, 10.0).unwrap();
        assert_eq!(grid.spacing(), 1.0 / 32.0);
        assert!((grid.truncation() - 0.3125).abs() < 1e-15);
        let nearest = (0..grid.len())
            .min_by(|&a, &b| grid.center(a).norm().total_cmp(&grid.center(b).norm()))
            .unwrap();
        assert_eq!(grid.value(nearest), -0.3125);
        assert!(grid.values().iter().all(|v| v.abs() <= grid.truncation()));
    }

    #[test]
    fn face_plane_voxels_are_zero() {
        // cube of side 1 spans [-0.5, 0.5]; with 32 voxels the planes x = ±0.5
        // pass through voxel centers
        let mesh = fixtures::cube(1.0);
        let grid = build_sdf(&mesh, 32, 10.0).unwrap();
        let mut checked = 0;
        for i in 0..grid.len() {
            let c = grid.center(i);
            if (c.x - 0.5).abs() < 1e-12 && c.y.abs() < 0.4 && c.z.abs() < 0.4 {
                assert!(
                    grid.value(i).abs() <= grid.spacing() * 1e-6,
                    "{}",
                    grid.value(i)
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn resolution_bounds() {
        let mesh = fixtures::cube(1.0);
        assert!(matches!(
            build_sdf(&mesh, 1000, 10.0),
            Err(SdfError::ResolutionOutOfRange(1000))
        ));
        assert!(build_sdf(&mesh, 15, 10.0).is_err());
        assert!(build_sdf(&mesh, 16, 0.0).is_err());
    }

    #[test]
    fn grid_encloses_mesh_with_margin() {
        let mesh = fixtures::box_mesh(Vec3::new(0.6, 0.3, 0.2));
        let grid = build_sdf(&mesh, 40, 10.0).unwrap();
        let b = grid.bounds();
        let m = mesh.bounds();
        for k in 0..3 {
            assert!(m.min[k] - b.min[k] >= 2.0 * grid.spacing() - 1e-12);
            assert!(b.max[k] - m.max[k] >= 2.0 * grid.spacing() - 1e-12);
        }
    }

    #[test]
    fn far_field_signs_match_direct_winding() {
        let mesh = fixtures::twin_spheres(0.3, 1.0);
        let grid = build_sdf(&mesh, 24, 2.0).unwrap();
        for i in (0..grid.len()).step_by(7) {
            let c = grid.center(i);
            let direct = mesh.truncated_signed_distance(&c, grid.truncation());
            assert!((grid.value(i) - direct).abs() < 1e-12, "voxel {i}");
        }
    }

    #[test]
    fn trilinear_identities() {
        let mesh = fixtures::icosphere(0.5, 3);
        let grid = build_sdf(&mesh, 20, 4.0).unwrap();
        let i = grid.index(5, 7, 9);
        assert_eq!(
            grid.query_trilinear(&grid.center(i)).unwrap(),
            grid.value(i)
        );
        let j = grid.index(6, 7, 9);
        let mid = (grid.center(i) + grid.center(j)) / 2.0;
        let expected = (grid.value(i) + grid.value(j)) / 2.0;
        assert!((grid.query_trilinear(&mid).unwrap() - expected).abs() < 1e-12);
        let last = grid.len() - 1;
        assert_eq!(
            grid.query_trilinear(&grid.center(last)).unwrap(),
            grid.value(last)
        );
    }

    #[test]
    fn out_of_domain_carries_boundary_value() {
        let mesh = fixtures::icosphere(0.5, 2);
        let grid = build_sdf(&mesh, 16, 10.0).unwrap();
        let outside = grid.bounds().max + Vec3::repeat(1.0);
        match grid.query_trilinear(&outside) {
            Err(SdfError::OutOfDomain { clamped, .. }) => {
                assert_eq!(clamped, grid.value(grid.len() - 1))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trilinear_tracks_mesh_distance_on_sphere() {
        let mesh = fixtures::icosphere(0.5, 4);
        let grid = build_sdf(&mesh, 40, 10.0).unwrap();
        let b = grid.bounds();
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut compared = 0;
        for _ in 0..2000 {
            let p = b.min + b.extent().component_mul(&Vec3::new(next(), next(), next()));
            let d = mesh.signed_distance(&p);
            if d.abs() < grid.truncation() / 2.0 {
                let q = grid.query_trilinear(&p).unwrap();
                assert!((q - d).abs() < grid.spacing(), "{q} vs {d}");
                compared += 1;
            }
        }
        assert!(compared > 100);
    }

    #[test]
    fn zero_level_fidelity() {
        for mesh in [fixtures::icosphere(0.5, 4), fixtures::cube(1.0)] {
            let grid = build_sdf(&mesh, 40, 10.0).unwrap();
            let samples = mesh.sample_surface(500, 3);
            let good = samples
                .iter()
                .filter(|s| grid.query_trilinear(&s.point).unwrap().abs() < grid.spacing())
                .count();
            assert!(good as f64 >= 0.95 * 500.0, "{good}");
        }
    }

    #[test]
    fn binary_round_trip() {
        let mesh = fixtures::icosphere(0.5, 2);
        let grid = build_sdf(&mesh, 16, 10.0).unwrap();
        let mut bytes = Vec::new();
        grid.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..6], b"SQSDF1");
        assert_eq!(bytes.len(), 6 + 12 + 40 + 4 * grid.len());
        let back = SdfGrid::read_from(&bytes[..]).unwrap();
        assert_eq!(back.dims(), grid.dims());
        assert_eq!(back.origin(), grid.origin());
        assert_eq!(back.spacing(), grid.spacing());
        for i in 0..grid.len() {
            assert_eq!(
                back.value(i),
                (grid.value(i) as f32 as f64).clamp(-grid.truncation(), grid.truncation())
            );
        }
        assert!(SdfGrid::read_from(&bytes[..bytes.len() - 1]).is_err());
        assert!(SdfGrid::read_from(&b"SQSDF0"[..]).is_err());
    }

    #[test]
    fn neighbors_stay_in_grid() {
        let grid = SdfGrid::from_fn(Vec3::zeros(), 1.0, [3, 4, 5], 1.0, |_| 1.0);
        let mut n = Vec::new();
        grid.for_each_neighbor(0, |j| n.push(j));
        assert_eq!(n, vec![1, 3, 12]);
        n.clear();
        grid.for_each_neighbor(grid.index(1, 1, 1), |j| n.push(j));
        assert_eq!(n.len(), 6);
    }
}
