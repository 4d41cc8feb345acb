use super::{Aabb, Bvh, Vec3};

/// Static point cloud with nearest-neighbour and box queries.
#[derive(Debug, Clone)]
pub struct PointSet {
    points: Vec<Vec3>,
    bvh: Bvh,
}

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Self {
        let boxes: Vec<Aabb> = points.iter().map(|p| Aabb::new(*p, *p)).collect();
        Self {
            bvh: Bvh::build(&boxes),
            points,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point and its distance.
    pub fn nearest(&self, p: &Vec3) -> Option<(usize, f64)> {
        self.bvh
            .nearest(p, f64::INFINITY, |i| {
                (self.points[i as usize] - p).norm_squared()
            })
            .map(|(i, d)| (i as usize, d.sqrt()))
    }

    /// Calls `visit` with the index of every point inside `region` (boundary
    /// included), in unspecified order.
    pub fn for_each_in_box<F: FnMut(usize)>(&self, region: &Aabb, mut visit: F) {
        self.bvh.for_each_overlapping(region, |i| {
            if region.contains(&self.points[i as usize]) {
                visit(i as usize)
            }
        });
    }
}
