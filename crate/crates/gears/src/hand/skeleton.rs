//! Rest skeleton constants and the low-dimensional shape parameterization.

use super::HandError;
use crate::math::Vec3;
use serde::Deserialize;

/// Total joints: wrist + five chains of [MCP, PIP, DIP, TIP].
pub const JOINT_COUNT: usize = 21;
/// Bones, indexed by their child joint (bone k connects parent[k] -> k).
pub const BONE_COUNT: usize = 20;
/// Fingertip joints (chain ends, no rotation parameters).
pub const TIP_JOINTS: [usize; 5] = [4, 8, 12, 16, 20];
/// Joints carrying an axis-angle rotation, in pose-vector order:
/// [MCP, PIP, DIP] per finger, thumb through pinky.
pub const ARTICULATED: [usize; 15] = [1, 2, 3, 5, 6, 7, 9, 10, 11, 13, 14, 15, 17, 18, 19];

const TEMPLATE_JSON: &str = include_str!("../../assets/hand_template.json");
/// Number of shape coefficients (bone-length group scales).
pub const SHAPE_COEFFS: usize = 10;

#[derive(Deserialize)]
struct TemplateFile {
    rest_joints: Vec<[f64; 3]>,
    parent: Vec<i32>,
    capsule_radius: Vec<f64>,
    shape_groups: Vec<usize>,
    palm: PalmSlab,
}

#[derive(Deserialize, Clone, Copy)]
pub struct PalmSlab {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

/// Rest-pose skeleton: joint positions, topology, per-bone capsule radii and
/// the bone-group table that the 10 shape coefficients act on.
#[derive(Clone)]
pub struct Skeleton {
    pub rest_joints: [Vec3; JOINT_COUNT],
    pub parent: [i32; JOINT_COUNT],
    pub capsule_radius: [f64; BONE_COUNT],
    pub shape_groups: [usize; BONE_COUNT],
    pub(crate) palm: PalmSlab,
}

impl Skeleton {
    /// Loads the skeleton shipped with the crate.
    pub fn default_template() -> Self {
        Self::from_json(TEMPLATE_JSON).expect("bundled hand template must be valid")
    }

    pub fn from_json(json: &str) -> Result<Self, HandError> {
        let file: TemplateFile =
            serde_json::from_str(json).map_err(|e| HandError::BadTemplate(e.to_string()))?;
        if file.rest_joints.len() != JOINT_COUNT || file.parent.len() != JOINT_COUNT {
            return Err(HandError::BadTemplate(format!(
                "expected {JOINT_COUNT} joints, got {} joints / {} parents",
                file.rest_joints.len(),
                file.parent.len()
            )));
        }
        if file.capsule_radius.len() != BONE_COUNT || file.shape_groups.len() != BONE_COUNT {
            return Err(HandError::BadTemplate("bone table must have 20 entries".into()));
        }
        let mut rest_joints = [Vec3::zeros(); JOINT_COUNT];
        for (i, p) in file.rest_joints.iter().enumerate() {
            rest_joints[i] = Vec3::new(p[0], p[1], p[2]);
        }
        let mut parent = [0i32; JOINT_COUNT];
        parent.copy_from_slice(&file.parent);
        if parent[0] != -1 {
            return Err(HandError::BadTemplate("joint 0 must be the root".into()));
        }
        for (k, &p) in parent.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= k {
                return Err(HandError::BadTemplate(format!(
                    "parent of joint {k} must precede it, got {p}"
                )));
            }
            let len = (rest_joints[k] - rest_joints[p as usize]).norm();
            if len < 1e-3 {
                return Err(HandError::BadTemplate(format!("rest bone into joint {k} is degenerate")));
            }
        }
        let mut capsule_radius = [0.0; BONE_COUNT];
        capsule_radius.copy_from_slice(&file.capsule_radius);
        let mut shape_groups = [0usize; BONE_COUNT];
        shape_groups.copy_from_slice(&file.shape_groups);
        if shape_groups.iter().any(|&g| g >= SHAPE_COEFFS) {
            return Err(HandError::BadTemplate("shape group out of range".into()));
        }
        Ok(Self { rest_joints, parent, capsule_radius, shape_groups, palm: file.palm })
    }

    pub fn parent_of(&self, joint: usize) -> Option<usize> {
        let p = self.parent[joint];
        (p >= 0).then_some(p as usize)
    }

    /// Rest bone vector into `joint` (joint > 0), scaled by `shape`.
    pub fn scaled_rest_bone(&self, shape: &HandShape, joint: usize) -> Vec3 {
        let p = self.parent[joint] as usize;
        let bone = joint - 1; // bones are indexed by child joint, offset by the root
        (self.rest_joints[joint] - self.rest_joints[p]) * shape.bone_scale(self, bone)
    }

    /// Rest joint positions after applying the shape's bone-length scales,
    /// chained from the wrist.
    pub fn shaped_rest_joints(&self, shape: &HandShape) -> [Vec3; JOINT_COUNT] {
        let mut out = [Vec3::zeros(); JOINT_COUNT];
        out[0] = self.rest_joints[0];
        for k in 1..JOINT_COUNT {
            let p = self.parent[k] as usize;
            out[k] = out[p] + self.scaled_rest_bone(shape, k);
        }
        out
    }
}

/// Shape coefficients: coefficient `i` scales the bone lengths of group `i`
/// by `1 + 0.1 * beta_i`, clamped to [0.5, 1.5].
#[derive(Clone, Debug, PartialEq)]
pub struct HandShape {
    pub beta: [f64; SHAPE_COEFFS],
}

impl Default for HandShape {
    fn default() -> Self {
        Self { beta: [0.0; SHAPE_COEFFS] }
    }
}

impl HandShape {
    pub fn bone_scale(&self, skeleton: &Skeleton, bone: usize) -> f64 {
        let g = skeleton.shape_groups[bone];
        (1.0 + 0.1 * self.beta[g]).clamp(0.5, 1.5)
    }

    /// Derivative of [`Self::bone_scale`] with respect to the coefficient of
    /// the bone's group: 0.1 inside the clamp, 0 where the clamp is active.
    pub fn bone_scale_gradient(&self, skeleton: &Skeleton, bone: usize) -> f64 {
        let g = skeleton.shape_groups[bone];
        let raw = 1.0 + 0.1 * self.beta[g];
        if raw > 0.5 && raw < 1.5 {
            0.1
        } else {
            0.0
        }
    }
}
