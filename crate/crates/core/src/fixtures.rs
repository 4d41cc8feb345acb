//! Procedural test objects.
//!
//! Boxes and spheres are built directly; composite objects (dumbbell, chair)
//! are meshed from an analytic signed distance with marching tetrahedra, which
//! gives watertight meshes with the mild faceting of reconstructed scans.

use std::collections::HashMap;

use crate::geometry::{Aabb, TriangleMesh, Vec3};

/// Axis-aligned box centered at the origin with the given full side lengths.
pub fn box_mesh(size: Vec3) -> TriangleMesh {
    let h = size * 0.5;
    let v: Vec<Vec3> = (0..8)
        .map(|k| {
            Vec3::new(
                if k & 1 == 0 { -h.x } else { h.x },
                if k & 2 == 0 { -h.y } else { h.y },
                if k & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    // outward counter-clockwise faces
    let tris = vec![
        [0, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
    ];
    TriangleMesh::new(v, tris).expect("box is valid")
}

/// Cube centered at the origin.
pub fn cube(side: f64) -> TriangleMesh {
    box_mesh(Vec3::repeat(side))
}

/// Subdivided icosahedron projected onto a sphere centered at the origin.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(verts.into_iter().map(|v| v * radius).collect(), faces)
        .expect("icosphere is valid")
}

/// Sphere translated to `center`.
pub fn sphere_at(center: Vec3, radius: f64, subdivisions: u32) -> TriangleMesh {
    let s = icosphere(radius, subdivisions);
    TriangleMesh::new(
        s.vertices().iter().map(|v| v + center).collect(),
        s.triangles().to_vec(),
    )
    .expect("translated sphere is valid")
}

/// Two disjoint spheres of equal radius whose centers are `separation` apart along x.
pub fn twin_spheres(radius: f64, separation: f64) -> TriangleMesh {
    let a = sphere_at(Vec3::new(-separation / 2.0, 0.0, 0.0), radius, 4);
    let b = sphere_at(Vec3::new(separation / 2.0, 0.0, 0.0), radius, 4);
    TriangleMesh::merged(&[&a, &b]).expect("disjoint spheres")
}

/// Exact signed distance to an axis-aligned box.
pub fn box_sdf(p: &Vec3, center: &Vec3, half: &Vec3) -> f64 {
    let q = (p - center).abs() - half;
    let outside = q.sup(&Vec3::zeros()).norm();
    outside + q.max().min(0.0)
}

/// Signed distance to a capped cylinder along x between `x0` and `x1`.
pub fn x_cylinder_sdf(p: &Vec3, x0: f64, x1: f64, radius: f64) -> f64 {
    let mid = 0.5 * (x0 + x1);
    let half = 0.5 * (x1 - x0);
    let d = nalgebra::Vector2::new(
        (p.x - mid).abs() - half,
        (p.y * p.y + p.z * p.z).sqrt() - radius,
    );
    d.sup(&nalgebra::Vector2::zeros()).norm() + d.max().min(0.0)
}

/// Two spheres joined by a thin cylindrical bridge along x.
pub fn dumbbell_sdf(p: &Vec3) -> f64 {
    let a = (p - Vec3::new(-0.45, 0.0, 0.0)).norm() - 0.25;
    let b = (p - Vec3::new(0.45, 0.0, 0.0)).norm() - 0.25;
    let bar = x_cylinder_sdf(p, -0.45, 0.45, 0.06);
    a.min(b).min(bar)
}

pub fn dumbbell() -> TriangleMesh {
    let bounds = Aabb::new(Vec3::new(-0.75, -0.3, -0.3), Vec3::new(0.75, 0.3, 0.3));
    isosurface(dumbbell_sdf, &bounds, 0.015)
}

/// Seat, four legs and a backrest, union of boxes (meters). The seat is
/// thicker than the legs and backrest.
pub fn chair_sdf(p: &Vec3) -> f64 {
    let mut d = box_sdf(p, &Vec3::new(0.0, 0.0, 0.45), &Vec3::new(0.25, 0.25, 0.05));
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let leg = box_sdf(
            p,
            &Vec3::new(0.22 * sx, 0.22 * sy, 0.2),
            &Vec3::new(0.03, 0.03, 0.2),
        );
        d = d.min(leg);
    }
    let back = box_sdf(p, &Vec3::new(0.0, 0.21, 0.75), &Vec3::new(0.25, 0.04, 0.25));
    d.min(back)
}

pub fn chair() -> TriangleMesh {
    let bounds = Aabb::new(Vec3::new(-0.3, -0.3, -0.05), Vec3::new(0.3, 0.3, 1.05));
    isosurface(chair_sdf, &bounds, 0.012)
}

// Kuhn subdivision of the unit cube into six tetrahedra sharing the 0–7 diagonal;
// corner k has offset (k&1, k>>1&1, k>>2&1). Neighboring cubes agree on shared faces.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Zero level set of `sdf` over `bounds` by marching tetrahedra at the given cell size.
pub fn isosurface<F: Fn(&Vec3) -> f64>(sdf: F, bounds: &Aabb, cell: f64) -> TriangleMesh {
    let n = (bounds.extent() / cell).map(|e| e.ceil() as usize + 1);
    let node =
        |i: usize, j: usize, k: usize| bounds.min + Vec3::new(i as f64, j as f64, k as f64) * cell;
    let id = |i: usize, j: usize, k: usize| (i + (n.x + 1) * (j + (n.y + 1) * k)) as u64;
    let mut values = vec![0.0; (n.x + 1) * (n.y + 1) * (n.z + 1)];
    for k in 0..=n.z {
        for j in 0..=n.y {
            for i in 0..=n.x {
                let v = sdf(&node(i, j, k));
                // keep the level set off grid nodes so no triangle collapses
                values[id(i, j, k) as usize] = if v == 0.0 { 1e-12 } else { v };
            }
        }
    }

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut edge_vertex: HashMap<(u64, u64), u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for k in 0..n.z {
        for j in 0..n.y {
            for i in 0..n.x {
                let corner = |c: usize| (i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                for tet in TETS {
                    let ids = tet.map(|c| {
                        let (a, b, cc) = corner(c);
                        id(a, b, cc)
                    });
                    let pts = tet.map(|c| {
                        let (a, b, cc) = corner(c);
                        node(a, b, cc)
                    });
                    let vals = ids.map(|x| values[x as usize]);
                    let inside: Vec<usize> = (0..4).filter(|&q| vals[q] < 0.0).collect();
                    let outside: Vec<usize> = (0..4).filter(|&q| vals[q] >= 0.0).collect();
                    if inside.is_empty() || outside.is_empty() {
                        continue;
                    }
                    let mut edge = |a: usize, b: usize| -> u32 {
                        let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                        *edge_vertex.entry(key).or_insert_with(|| {
                            let t = vals[a] / (vals[a] - vals[b]);
                            vertices.push(pts[a] + (pts[b] - pts[a]) * t);
                            vertices.len() as u32 - 1
                        })
                    };
                    let polygon: Vec<u32> = match (inside.len(), outside.len()) {
                        (1, 3) => outside.iter().map(|&o| edge(inside[0], o)).collect(),
                        (3, 1) => inside.iter().map(|&q| edge(q, outside[0])).collect(),
                        _ => vec![
                            edge(inside[0], outside[0]),
                            edge(inside[0], outside[1]),
                            edge(inside[1], outside[1]),
                            edge(inside[1], outside[0]),
                        ],
                    };
                    let centroid = |set: &[usize]| {
                        set.iter().map(|&q| pts[q]).sum::<Vec3>() / set.len() as f64
                    };
                    let out_dir = centroid(&outside) - centroid(&inside);
                    for f in 1..polygon.len() - 1 {
                        let mut tri = [polygon[0], polygon[f], polygon[f + 1]];
                        let [a, b, c] = tri.map(|x| vertices[x as usize]);
                        if (b - a).cross(&(c - a)).dot(&out_dir) < 0.0 {
                            tri.swap(1, 2);
                        }
                        triangles.push(tri);
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles).expect("level set is nonempty")
}
