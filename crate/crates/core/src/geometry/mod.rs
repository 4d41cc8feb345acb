//! Triangle meshes, rigid poses and spatial queries.

mod bvh;
mod io;
mod mesh;
mod points;
mod pose;

pub use bvh::Aabb;
pub(crate) use bvh::Bvh;
pub use io::{load_mesh, load_mesh_file, write_obj, Location, MeshFormat};
pub use mesh::{
    closest_point_on_triangle, SurfaceSample, TriangleMesh, MERGE_TOLERANCE, MIN_TRIANGLE_AREA,
};
pub use points::PointSet;
pub use pose::{check_rotation, Pose, PoseError, PoseRecord, ROTATION_TOLERANCE};

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("{format} parse error at {location}: {message}")]
    Format {
        format: &'static str,
        location: Location,
        message: String,
    },
    #[error("mesh has no usable triangles")]
    Empty,
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFinite { vertex: usize },
    #[error("triangle {triangle} references vertex {index} but only {vertex_count} exist")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("cannot infer mesh format from `{0}`")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
