//! Axis-aligned boxes and a binary bounding-volume hierarchy over indexed items.
//!
//! The hierarchy only stores item indices and bounds; distance and containment
//! tests are supplied by the caller, so the same structure serves triangles,
//! contact points and zero-level samples.

use super::Vec3;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// The empty box; growing it by any point yields that point.
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a Vec3>>(points: I) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }

    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Corners in a fixed order (bit i of the index selects max on axis i).
    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|k| {
            Vec3::new(
                if k & 1 == 0 { self.min.x } else { self.max.x },
                if k & 2 == 0 { self.min.y } else { self.max.y },
                if k & 4 == 0 { self.min.z } else { self.max.z },
            )
        })
    }
}

const LEAF_SIZE: usize = 4;

/// Every node owns the contiguous item range `order[start..end]`. An interior
/// node's left child immediately follows it; `right` is zero for leaves (the
/// root is never a right child).
#[derive(Debug, Clone)]
pub(crate) struct BvhNode {
    pub bounds: Aabb,
    pub start: u32,
    pub end: u32,
    pub right: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.right == 0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    pub nodes: Vec<BvhNode>,
    pub order: Vec<u32>,
}

impl Bvh {
    /// Builds a hierarchy by median split of item centroids along the longest axis.
    pub fn build(bounds: &[Aabb]) -> Self {
        let mut order: Vec<u32> = (0..bounds.len() as u32).collect();
        let centroids: Vec<Vec3> = bounds.iter().map(Aabb::center).collect();
        let mut nodes = Vec::with_capacity(2 * bounds.len() / LEAF_SIZE + 1);
        if !bounds.is_empty() {
            build_node(&mut nodes, &mut order, 0, bounds, &centroids);
        }
        Self { nodes, order }
    }

    pub fn items(&self, node: &BvhNode) -> &[u32] {
        &self.order[node.start as usize..node.end as usize]
    }

    /// Nearest item with squared distance strictly below `max_dist_sq`.
    pub fn nearest<F>(&self, p: &Vec3, max_dist_sq: f64, mut dist_sq: F) -> Option<(u32, f64)>
    where
        F: FnMut(u32) -> f64,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(u32, f64)> = None;
        let mut best_d = max_dist_sq;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_sq(p)));
        while let Some((idx, lower)) = stack.pop() {
            if lower >= best_d {
                continue;
            }
            let node = &self.nodes[idx];
            if node.is_leaf() {
                for &item in self.items(node) {
                    let d = dist_sq(item);
                    if d < best_d {
                        best_d = d;
                        best = Some((item, d));
                    }
                }
            } else {
                let left = idx + 1;
                let right = node.right as usize;
                let dl = self.nodes[left].bounds.distance_sq(p);
                let dr = self.nodes[right].bounds.distance_sq(p);
                if dl <= dr {
                    stack.push((right, dr));
                    stack.push((left, dl));
                } else {
                    stack.push((left, dl));
                    stack.push((right, dr));
                }
            }
        }
        best
    }

    /// Calls `visit` for every item stored in a leaf whose bounds overlap
    /// `region`. Items are candidates only; callers test them exactly.
    pub fn for_each_overlapping<F>(&self, region: &Aabb, mut visit: F)
    where
        F: FnMut(u32),
    {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if !node.bounds.intersects(region) {
                continue;
            }
            if node.is_leaf() {
                for &item in self.items(node) {
                    visit(item);
                }
            } else {
                stack.push(node.right as usize);
                stack.push(idx + 1);
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<BvhNode>,
    order: &mut [u32],
    offset: usize,
    bounds: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let node_bounds = order
        .iter()
        .fold(Aabb::empty(), |acc, &i| acc.union(&bounds[i as usize]));
    let idx = nodes.len();
    nodes.push(BvhNode {
        bounds: node_bounds,
        start: offset as u32,
        end: (offset + order.len()) as u32,
        right: 0,
    });
    if order.len() <= LEAF_SIZE {
        return idx;
    }
    let cbounds = Aabb::from_points(order.iter().map(|&i| &centroids[i as usize]));
    let axis = cbounds.longest_axis();
    if cbounds.extent()[axis] <= 0.0 {
        // all centroids coincide; splitting further cannot separate them
        return idx;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    build_node(nodes, lo, offset, bounds, centroids);
    let right = build_node(nodes, hi, offset + mid, bounds, centroids);
    nodes[idx].right = right as u32;
    idx
}
