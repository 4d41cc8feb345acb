use std::collections::HashMap;
use std::f64::consts::PI;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bvh::{Aabb, Bvh};
use super::{MeshError, Vec3};

/// Vertices closer than this are merged at construction.
pub const MERGE_TOLERANCE: f64 = 1e-9;
/// Triangles with smaller area are dropped at construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
/// Distances below this are reported as exactly zero (the point is on the surface).
const ON_SURFACE: f64 = 1e-12;
/// Far-field acceptance ratio for the hierarchical winding number.
const WINDING_BETA: f64 = 2.0;

/// A point on the mesh surface with the outward normal of its triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Per-node dipole data for the hierarchical winding number.
#[derive(Debug, Clone)]
struct WindingNode {
    /// Sum of area-weighted normals (`½ (b−a)×(c−a)`).
    area_vector: Vec3,
    /// Area-weighted centroid of the node's triangles.
    center: Vec3,
    /// Radius of a ball around `center` containing the node bounds.
    radius: f64,
}

/// Cleaned, immutable triangle mesh with a bounding-volume hierarchy.
///
/// Construction merges near-duplicate vertices, drops degenerate triangles and
/// unreferenced vertices, and computes face and vertex normals. All queries take
/// `&self` and are safe to call from many threads.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    vertex_normals: Vec<Vec3>,
    face_normals: Vec<Vec3>,
    areas: Vec<f64>,
    watertight: bool,
    bounds: Aabb,
    bvh: Bvh,
    winding: Vec<WindingNode>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(MeshError::NonFinite { vertex: i });
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    index: bad as usize,
                    vertex_count: vertices.len(),
                });
            }
        }

        let remap = merge_duplicates(&vertices, MERGE_TOLERANCE);
        let mut kept: Vec<[u32; 3]> = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let t = [
                remap[tri[0] as usize],
                remap[tri[1] as usize],
                remap[tri[2] as usize],
            ];
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            let (a, b, c) = (
                vertices[t[0] as usize],
                vertices[t[1] as usize],
                vertices[t[2] as usize],
            );
            if 0.5 * (b - a).cross(&(c - a)).norm() < MIN_TRIANGLE_AREA {
                continue;
            }
            kept.push(t);
        }
        if kept.is_empty() {
            return Err(MeshError::Empty);
        }

        // compact to referenced vertices, in order of first reference
        let mut new_index = vec![u32::MAX; vertices.len()];
        let mut compact = Vec::new();
        for tri in kept.iter_mut() {
            for i in tri.iter_mut() {
                let old = *i as usize;
                if new_index[old] == u32::MAX {
                    new_index[old] = compact.len() as u32;
                    compact.push(vertices[old]);
                }
                *i = new_index[old];
            }
        }
        Ok(Self::from_clean(compact, kept))
    }

    fn from_clean(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let mut face_normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut vertex_acc = vec![Vec3::zeros(); vertices.len()];
        let mut first_face = vec![usize::MAX; vertices.len()];
        for (f, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let len = cross.norm();
            face_normals.push(cross / len);
            areas.push(0.5 * len);
            for &i in tri {
                vertex_acc[i as usize] += cross;
                if first_face[i as usize] == usize::MAX {
                    first_face[i as usize] = f;
                }
            }
        }
        let vertex_normals = vertex_acc
            .iter()
            .zip(&first_face)
            .map(|(n, &f)| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    face_normals[f]
                }
            })
            .collect();

        let watertight = edge_use_counts(&triangles).values().all(|&c| c == 2);
        let bounds = Aabb::from_points(vertices.iter());
        let tri_bounds: Vec<Aabb> = triangles
            .iter()
            .map(|t| Aabb::from_points(t.iter().map(|&i| &vertices[i as usize])))
            .collect();
        let bvh = Bvh::build(&tri_bounds);

        let mut mesh = Self {
            vertices,
            triangles,
            vertex_normals,
            face_normals,
            areas,
            watertight,
            bounds,
            bvh,
            winding: Vec::new(),
        };
        mesh.winding = mesh.build_winding_nodes();
        mesh
    }

    fn build_winding_nodes(&self) -> Vec<WindingNode> {
        self.bvh
            .nodes
            .iter()
            .map(|node| {
                let mut area_vector = Vec3::zeros();
                let mut weighted = Vec3::zeros();
                let mut total = 0.0;
                for &t in &self.bvh.order[node.start as usize..node.end as usize] {
                    let t = t as usize;
                    let [a, b, c] = self.triangle_points(t);
                    area_vector += self.face_normals[t] * self.areas[t];
                    weighted += (a + b + c) / 3.0 * self.areas[t];
                    total += self.areas[t];
                }
                let center = if total > 0.0 {
                    weighted / total
                } else {
                    node.bounds.center()
                };
                let radius = node
                    .bounds
                    .corners()
                    .iter()
                    .map(|c| (c - center).norm())
                    .fold(0.0, f64::max);
                WindingNode {
                    area_vector,
                    center,
                    radius,
                }
            })
            .collect()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Unit vertex normals (area-weighted average of incident face normals).
    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.face_normals
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn surface_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Closest surface point and its triangle.
    pub fn closest_point(&self, p: &Vec3) -> (Vec3, usize) {
        let (t, _) = self
            .bvh
            .nearest(p, f64::INFINITY, |t| {
                self.triangle_distance_sq(t as usize, p)
            })
            .expect("mesh has at least one triangle");
        let [a, b, c] = self.triangle_points(t as usize);
        (closest_point_on_triangle(p, &a, &b, &c), t as usize)
    }

    fn triangle_distance_sq(&self, t: usize, p: &Vec3) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        (closest_point_on_triangle(p, &a, &b, &c) - p).norm_squared()
    }

    pub fn unsigned_distance(&self, p: &Vec3) -> f64 {
        self.bvh
            .nearest(p, f64::INFINITY, |t| {
                self.triangle_distance_sq(t as usize, p)
            })
            .map(|(_, d)| d.sqrt())
            .unwrap_or(f64::INFINITY)
    }

    /// Unsigned distance if some triangle is strictly closer than `max_distance`.
    pub fn unsigned_distance_within(&self, p: &Vec3, max_distance: f64) -> Option<f64> {
        self.bvh
            .nearest(p, max_distance * max_distance, |t| {
                self.triangle_distance_sq(t as usize, p)
            })
            .map(|(_, d)| d.sqrt())
    }

    /// Signed distance: negative inside (winding number ≥ ½), positive outside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.unsigned_distance(p);
        if d < ON_SURFACE {
            return 0.0;
        }
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Signed distance clamped to `[-limit, limit]`; skips the exact distance
    /// search beyond `limit`.
    pub fn truncated_signed_distance(&self, p: &Vec3, limit: f64) -> f64 {
        let d = match self.unsigned_distance_within(p, limit) {
            Some(d) if d < ON_SURFACE => return 0.0,
            Some(d) => d,
            None => limit,
        };
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.winding_number(p) >= 0.5
    }

    /// Generalized winding number, hierarchically approximated for distant
    /// clusters of triangles and exact near the query.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.bvh.nodes[idx];
            let w = &self.winding[idx];
            let r = w.center - p;
            let dist = r.norm();
            if dist > WINDING_BETA * w.radius {
                total += w.area_vector.dot(&r) / (dist * dist * dist);
                continue;
            }
            if node.is_leaf() {
                for &t in self.bvh.items(node) {
                    let [a, b, c] = self.triangle_points(t as usize);
                    total += solid_angle(p, &a, &b, &c);
                }
            } else {
                stack.push(node.right as usize);
                stack.push(idx + 1);
            }
        }
        total / (4.0 * PI)
    }

    /// Winding number summed exactly over every triangle.
    pub fn winding_number_exact(&self, p: &Vec3) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                solid_angle(p, &a, &b, &c)
            })
            .sum::<f64>()
            / (4.0 * PI)
    }

    /// `n` area-weighted surface samples, deterministic for a given seed.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<SurfaceSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = WeightedIndex::new(&self.areas).expect("positive triangle areas");
        (0..n)
            .map(|_| {
                let t = dist.sample(&mut rng);
                let [a, b, c] = self.triangle_points(t);
                let s: f64 = rng.gen::<f64>().sqrt();
                let r2: f64 = rng.gen();
                SurfaceSample {
                    point: a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2),
                    normal: self.face_normals[t],
                }
            })
            .collect()
    }

    /// Uniform scale about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self, MeshError> {
        Self::new(
            self.vertices.iter().map(|v| v * factor).collect(),
            self.triangles.clone(),
        )
    }

    /// Applies a rigid transform to every vertex.
    pub fn transformed(&self, pose: &super::Pose) -> Result<Self, MeshError> {
        Self::new(
            self.vertices
                .iter()
                .map(|v| pose.transform_point(v))
                .collect(),
            self.triangles.clone(),
        )
    }

    /// Concatenates several meshes into one triangle soup.
    pub fn merged(parts: &[&TriangleMesh]) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for part in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&part.vertices);
            triangles.extend(part.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        Self::new(vertices, triangles)
    }
}

fn edge_use_counts(triangles: &[[u32; 3]]) -> HashMap<(u32, u32), u32> {
    let mut counts = HashMap::with_capacity(triangles.len() * 3 / 2);
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

/// Maps every vertex to the index of the first vertex within `tol` of it.
fn merge_duplicates(vertices: &[Vec3], tol: f64) -> Vec<u32> {
    let cell = |v: &Vec3| -> [i64; 3] { [0, 1, 2].map(|i| (v[i] / tol).floor() as i64) };
    let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::with_capacity(vertices.len());
    let mut remap = Vec::with_capacity(vertices.len());
    let tol_sq = tol * tol;
    for (i, v) in vertices.iter().enumerate() {
        let c = cell(v);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(reps) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &r in reps {
                            if (vertices[r as usize] - v).norm_squared() <= tol_sq {
                                found = Some(r);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        match found {
            Some(r) => remap.push(r),
            None => {
                grid.entry(c).or_default().push(i as u32);
                remap.push(i as u32);
            }
        }
    }
    remap
}

/// Closest point to `p` on triangle `abc` (Voronoi-region classification).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Signed solid angle of triangle `abc` seen from `p`.
fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let a = a - p;
    let b = b - p;
    let c = c - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * num.atan2(den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cube_winding_and_distance() {
        let cube = fixtures::cube(1.0);
        assert!(cube.is_watertight());
        assert!((cube.winding_number_exact(&Vec3::zeros()) - 1.0).abs() < 1e-12);
        assert!(cube.winding_number_exact(&Vec3::new(2.0, 0.0, 0.0)).abs() < 1e-12);
        assert_eq!(cube.signed_distance(&Vec3::zeros()), -0.5);
        assert_eq!(cube.signed_distance(&Vec3::new(1.5, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn duplicate_vertices_are_merged() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0 + 1e-10, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 2]]).unwrap();
        assert_eq!(mesh.vertices().len(), 4);
        assert_eq!(mesh.triangles().len(), 2);
    }

    #[test]
    fn degenerate_triangles_are_dropped() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        // [0,1,3] is collinear
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(mesh.triangles().len(), 1);
        assert_eq!(mesh.vertices().len(), 3);
        let err = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::Empty));
    }

    #[test]
    fn rejects_bad_indices_and_nan() {
        let err = TriangleMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 5]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 5, .. }));
        let err = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::new(f64::NAN, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::NonFinite { vertex: 2 }));
    }

    #[test]
    fn fast_winding_number_agrees_with_exact_sum() {
        let sphere = fixtures::icosphere(0.5, 3);
        for p in [
            Vec3::new(0.1, 0.2, -0.1),
            Vec3::new(0.45, 0.0, 0.1),
            Vec3::new(0.6, 0.1, 0.0),
            Vec3::new(3.0, -2.0, 1.0),
        ] {
            let fast = sphere.winding_number(&p);
            let exact = sphere.winding_number_exact(&p);
            assert!((fast - exact).abs() < 0.05, "{p:?}: {fast} vs {exact}");
            assert_eq!(fast >= 0.5, exact >= 0.5);
        }
    }

    #[test]
    fn vertex_normals_are_unit_and_outward() {
        let sphere = fixtures::icosphere(1.0, 2);
        for (v, n) in sphere.vertices().iter().zip(sphere.vertex_normals()) {
            assert!((n.norm() - 1.0).abs() < 1e-6);
            assert!(n.dot(&v.normalize()) > 0.95);
        }
    }
}
