//! Triangle meshes, spatial indexing and the geometry sensors that turn a
//! hand/object scene into network inputs.

mod grid;
mod mesh;
mod sensor;
mod trajectory;

pub use grid::HashGrid;
pub use mesh::{
    closest_face_point, closest_point_on_mesh, closest_point_on_triangle,
    signed_distance_convex, TriMesh,
};
pub use sensor::{
    canonicalize_to_wrist, crop_cube, joint_radius_query, sample_surface,
    sample_trajectory_window, JointSensorSample, PointCloud, WindowFrame,
};
pub use trajectory::{sanitize_rotations, HandTrajectory, ObjectTrajectory, RigidMotion};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("mesh has no faces with positive area")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("rotation at frame {frame} drifts from orthonormal by {error:.2e} (limit 1e-4)")]
    BadRotation { frame: usize, error: f64 },
    #[error("hand and object trajectories disagree on frame count: {hand} vs {object}")]
    FrameMismatch { hand: usize, object: usize },
    #[error("failed to parse OBJ at line {line}: {message}")]
    ObjParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
