//! Parametric 21-joint hand model: rest skeleton, shape/pose parameters,
//! forward and inverse kinematics, joint-template frames, capsule surface
//! mesh and the linear joint regressor.

mod kinematics;
mod mesh;
mod skeleton;

pub use kinematics::{
    forward_kinematics, fk_with_frames, inverse_kinematics, inverse_kinematics_lenient,
    repose_from_frames, HandPose, JointSet, TemplateFrames,
};
pub use mesh::{hand_surface_mesh, joint_regressor, regressor_vertex_count, HandMeshLayout};
pub use skeleton::{
    HandShape, Skeleton, ARTICULATED, BONE_COUNT, JOINT_COUNT, SHAPE_COEFFS, TIP_JOINTS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("pose validation failed: {0}")]
    InvalidPose(String),
    #[error("bone into joint {joint} is shorter than 1 mm; cannot orient its frame")]
    DegenerateBone { joint: usize },
    #[error("joint regressor expects {expected} vertices, got {got}")]
    VertexCountMismatch { expected: usize, got: usize },
    #[error("hand template asset is malformed: {0}")]
    BadTemplate(String),
}
