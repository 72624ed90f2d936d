//! Forward and inverse kinematics over the 21-joint skeleton.

use super::skeleton::{HandShape, Skeleton, ARTICULATED, JOINT_COUNT};
use super::HandError;
use crate::math::{min_rotation, orthonormality_error, rodrigues, Mat3, Vec3};

/// Minimum observed bone length for which a frame orientation is solvable.
const MIN_BONE_LEN: f64 = 1e-3;

/// Full hand pose: per-joint axis-angle rotations for the 15 articulated
/// joints (in [`ARTICULATED`] order), plus the global wrist transform.
#[derive(Clone, Debug, PartialEq)]
pub struct HandPose {
    pub theta: [Vec3; 15],
    pub global_rot: Mat3,
    pub wrist_pos: Vec3,
}

impl HandPose {
    pub fn rest(global_rot: Mat3, wrist_pos: Vec3) -> Self {
        Self { theta: [Vec3::zeros(); 15], global_rot, wrist_pos }
    }

    /// Checks the pose invariants: orthonormal global rotation and joint
    /// angles strictly below pi.
    pub fn validate(&self) -> Result<(), HandError> {
        let err = orthonormality_error(&self.global_rot);
        if err > 1e-6 {
            return Err(HandError::InvalidPose(format!(
                "global rotation is not orthonormal (error {err:.2e})"
            )));
        }
        for (i, t) in self.theta.iter().enumerate() {
            let a = t.norm();
            if !a.is_finite() || a >= std::f64::consts::PI {
                return Err(HandError::InvalidPose(format!(
                    "theta[{i}] has magnitude {a:.3} rad (must be < pi)"
                )));
            }
        }
        Ok(())
    }
}

/// Positions of all 21 joints, world frame, meters.
pub type JointSet = [Vec3; JOINT_COUNT];

/// Per-joint rigid frames of a posed hand. `rotation[k]` is the cumulative
/// rotation of joint k's segment (the map from joint-template directions to
/// world directions) and `origin[k]` the joint's world position; together
/// they carry joint-local geometry to the world frame. `relative[k]` is the
/// rotation of joint k relative to its parent (the global rotation at the
/// root, identity at fingertips).
#[derive(Clone, Debug)]
pub struct TemplateFrames {
    pub rotation: [Mat3; JOINT_COUNT],
    pub origin: [Vec3; JOINT_COUNT],
    pub relative: [Mat3; JOINT_COUNT],
}

impl TemplateFrames {
    /// World point -> joint-k template coordinates (centered at the joint).
    pub fn to_template(&self, k: usize, p: &Vec3) -> Vec3 {
        self.rotation[k].transpose() * (p - self.origin[k])
    }

    /// World direction -> joint-k template direction.
    pub fn dir_to_template(&self, k: usize, d: &Vec3) -> Vec3 {
        self.rotation[k].transpose() * d
    }

    /// Joint-k template displacement -> world displacement.
    pub fn dir_to_world(&self, k: usize, d: &Vec3) -> Vec3 {
        self.rotation[k] * d
    }
}

fn local_rotations(pose: &HandPose) -> [Mat3; JOINT_COUNT] {
    let mut local = [Mat3::identity(); JOINT_COUNT];
    for (i, &joint) in ARTICULATED.iter().enumerate() {
        local[joint] = rodrigues(&pose.theta[i]);
    }
    local
}

/// Joint positions of the posed, shaped hand.
pub fn forward_kinematics(skeleton: &Skeleton, shape: &HandShape, pose: &HandPose) -> JointSet {
    fk_with_frames(skeleton, shape, pose).0
}

/// Joint positions plus the per-joint template frames of the posed hand.
pub fn fk_with_frames(
    skeleton: &Skeleton,
    shape: &HandShape,
    pose: &HandPose,
) -> (JointSet, TemplateFrames) {
    let local = local_rotations(pose);
    let mut joints = [Vec3::zeros(); JOINT_COUNT];
    let mut rotation = [Mat3::identity(); JOINT_COUNT];
    let mut relative = [Mat3::identity(); JOINT_COUNT];
    joints[0] = pose.wrist_pos;
    rotation[0] = pose.global_rot;
    relative[0] = pose.global_rot;
    for k in 1..JOINT_COUNT {
        let p = skeleton.parent[k] as usize;
        joints[k] = joints[p] + rotation[p] * skeleton.scaled_rest_bone(shape, k);
        rotation[k] = rotation[p] * local[k];
        relative[k] = local[k];
    }
    (joints, TemplateFrames { rotation, origin: joints, relative })
}

/// Recovers per-joint frames from observed joint positions and the known
/// global wrist rotation. Each articulated joint's relative rotation is the
/// smallest rotation aligning its parent-frame rest bone direction to the
/// observed bone direction (zero twist, which is unobservable from joint
/// positions). Frame origins are the observed joints themselves, so the
/// frames remain meaningful for joints that violate bone-length rigidity.
///
/// Fails with [`HandError::DegenerateBone`] if an observed bone is shorter
/// than 1 mm; see [`inverse_kinematics_lenient`] for the substituting variant.
pub fn inverse_kinematics(
    skeleton: &Skeleton,
    joints: &JointSet,
    global_rot: &Mat3,
) -> Result<TemplateFrames, HandError> {
    ik_impl(skeleton, joints, global_rot, true)
}

/// Like [`inverse_kinematics`], but a joint whose outgoing bone is shorter
/// than 1 mm inherits its parent's rotation instead of failing.
pub fn inverse_kinematics_lenient(
    skeleton: &Skeleton,
    joints: &JointSet,
    global_rot: &Mat3,
) -> TemplateFrames {
    ik_impl(skeleton, joints, global_rot, false).expect("lenient IK cannot fail")
}

fn ik_impl(
    skeleton: &Skeleton,
    joints: &JointSet,
    global_rot: &Mat3,
    strict: bool,
) -> Result<TemplateFrames, HandError> {
    let mut rotation = [Mat3::identity(); JOINT_COUNT];
    let mut relative = [Mat3::identity(); JOINT_COUNT];
    rotation[0] = *global_rot;
    relative[0] = *global_rot;
    // The rotation of joint k is observable from the bone leaving k (into its
    // child c); walk each chain wrist -> tip. Tips have no outgoing bone and
    // inherit their parent's rotation.
    for k in 1..JOINT_COUNT {
        let p = skeleton.parent[k] as usize;
        if skeleton.parent.iter().any(|&q| q == k as i32) {
            // k has a child; solved below when that child is visited.
            let c = (1..JOINT_COUNT).find(|&c| skeleton.parent[c] == k as i32).unwrap();
            let bone_obs = joints[c] - joints[k];
            let len = bone_obs.norm();
            if len < MIN_BONE_LEN {
                if strict {
                    return Err(HandError::DegenerateBone { joint: k });
                }
                relative[k] = Mat3::identity();
                rotation[k] = rotation[p];
                continue;
            }
            let rest_dir = (skeleton.rest_joints[c] - skeleton.rest_joints[k]).normalize();
            let obs_local = (rotation[p].transpose() * bone_obs).normalize();
            relative[k] = min_rotation(&rest_dir, &obs_local);
            rotation[k] = rotation[p] * relative[k];
        } else {
            relative[k] = Mat3::identity();
            rotation[k] = rotation[p];
        }
    }
    Ok(TemplateFrames { rotation, origin: *joints, relative })
}

/// Rebuilds joint positions from recovered frames by chaining rest bones:
/// the inverse-kinematics round trip. `wrist` seeds the root position.
pub fn repose_from_frames(skeleton: &Skeleton, frames: &TemplateFrames, wrist: &Vec3) -> JointSet {
    let mut joints = [Vec3::zeros(); JOINT_COUNT];
    let mut rotation = [Mat3::identity(); JOINT_COUNT];
    joints[0] = *wrist;
    rotation[0] = frames.relative[0];
    for k in 1..JOINT_COUNT {
        let p = skeleton.parent[k] as usize;
        rotation[k] = rotation[p] * frames.relative[k];
        joints[k] = joints[p] + rotation[p] * (skeleton.rest_joints[k] - skeleton.rest_joints[p]);
    }
    joints
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_rotation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64) -> HandPose {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let mut pose = HandPose::rest(
            rodrigues(&(axis * rng.gen_range(0.0..1.5))),
            Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
        );
        for t in pose.theta.iter_mut() {
            *t = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize()
                * rng.gen_range(0.0..max_angle);
        }
        pose
    }

    #[test]
    fn rest_pose_reproduces_rest_joints() {
        let s = Skeleton::default_template();
        let pose = HandPose::rest(Mat3::identity(), Vec3::zeros());
        let joints = forward_kinematics(&s, &HandShape::default(), &pose);
        for k in 0..JOINT_COUNT {
            assert_relative_eq!(joints[k], s.rest_joints[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn fk_root_is_exactly_the_wrist() {
        let s = Skeleton::default_template();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pose = random_pose(&mut rng, 1.2);
            let joints = forward_kinematics(&s, &HandShape::default(), &pose);
            assert_eq!(joints[0], pose.wrist_pos);
        }
    }

    #[test]
    fn fk_is_rigidly_equivariant() {
        let s = Skeleton::default_template();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let pose = random_pose(&mut rng, 1.2);
            let r = rodrigues(&Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ));
            let t = Vec3::new(0.3, -0.1, 0.7);
            let moved = HandPose {
                theta: pose.theta,
                global_rot: r * pose.global_rot,
                wrist_pos: r * pose.wrist_pos + t,
            };
            let a = forward_kinematics(&s, &HandShape::default(), &pose);
            let b = forward_kinematics(&s, &HandShape::default(), &moved);
            for k in 0..JOINT_COUNT {
                assert_relative_eq!(r * a[k] + t, b[k], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fk_preserves_scaled_bone_lengths() {
        let s = Skeleton::default_template();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut shape = HandShape::default();
        for b in shape.beta.iter_mut() {
            *b = rng.gen_range(-2.0..2.0);
        }
        let pose = random_pose(&mut rng, 1.2);
        let joints = forward_kinematics(&s, &shape, &pose);
        for k in 1..JOINT_COUNT {
            let p = s.parent[k] as usize;
            let expect = s.scaled_rest_bone(&shape, k).norm();
            assert_relative_eq!((joints[k] - joints[p]).norm(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn ik_round_trip_recovers_positions() {
        let s = Skeleton::default_template();
        let shape = HandShape::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 1.2);
            let joints = forward_kinematics(&s, &shape, &pose);
            let frames = inverse_kinematics(&s, &joints, &pose.global_rot).unwrap();
            let rebuilt = repose_from_frames(&s, &frames, &pose.wrist_pos);
            for k in 0..JOINT_COUNT {
                assert!(
                    (rebuilt[k] - joints[k]).norm() < 1e-6,
                    "joint {k} off by {:.2e}",
                    (rebuilt[k] - joints[k]).norm()
                );
            }
        }
    }

    #[test]
    fn ik_recovers_a_twist_free_single_bone_rotation() {
        let s = Skeleton::default_template();
        let shape = HandShape::default();
        // Rotate only the index PIP about an axis orthogonal to its outgoing
        // bone; the solved relative rotation must be exactly that rotation.
        let pip = 6;
        let dip = 7;
        let bone = (s.rest_joints[dip] - s.rest_joints[pip]).normalize();
        let axis = crate::math::orthogonal_unit(&bone);
        let angle = 30f64.to_radians();
        let mut pose = HandPose::rest(Mat3::identity(), Vec3::zeros());
        pose.theta[4] = axis * angle; // ARTICULATED[4] == joint 6
        let joints = forward_kinematics(&s, &shape, &pose);
        let frames = inverse_kinematics(&s, &joints, &pose.global_rot).unwrap();
        let solved = log_rotation(&frames.relative[pip]);
        assert_relative_eq!(solved, axis * angle, epsilon = 1e-9);
    }

    #[test]
    fn ik_rejects_degenerate_bones_strictly_and_substitutes_leniently() {
        let s = Skeleton::default_template();
        let pose = HandPose::rest(Mat3::identity(), Vec3::zeros());
        let mut joints = forward_kinematics(&s, &HandShape::default(), &pose);
        joints[7] = joints[6]; // collapse index DIP onto PIP
        match inverse_kinematics(&s, &joints, &Mat3::identity()) {
            Err(HandError::DegenerateBone { joint }) => assert_eq!(joint, 6),
            other => panic!("expected DegenerateBone, got {other:?}"),
        }
        let frames = inverse_kinematics_lenient(&s, &joints, &Mat3::identity());
        // Joint 6 could not be oriented; it inherits joint 5's rotation.
        assert_relative_eq!(frames.rotation[6], frames.rotation[5], epsilon = 1e-15);
    }

    #[test]
    fn template_frames_compose_child_offsets() {
        let s = Skeleton::default_template();
        let shape = HandShape::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pose = random_pose(&mut rng, 1.0);
        let (joints, frames) = fk_with_frames(&s, &shape, &pose);
        assert_eq!(frames.relative[0], pose.global_rot);
        assert_eq!(frames.origin[0], pose.wrist_pos);
        for k in 1..JOINT_COUNT {
            let p = s.parent[k] as usize;
            let rebuilt = frames.origin[p]
                + frames.rotation[p] * (s.rest_joints[k] - s.rest_joints[p]);
            assert!((rebuilt - joints[k]).norm() < 1e-6);
        }
    }

    #[test]
    fn template_transform_round_trips_points() {
        let s = Skeleton::default_template();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = random_pose(&mut rng, 1.0);
        let (_, frames) = fk_with_frames(&s, &HandShape::default(), &pose);
        let p = Vec3::new(0.05, -0.02, 0.11);
        for k in [0usize, 6, 12, 20] {
            let local = frames.to_template(k, &p);
            let back = frames.rotation[k] * local + frames.origin[k];
            assert_relative_eq!(back, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn pose_validation_catches_bad_inputs() {
        let mut pose = HandPose::rest(Mat3::identity() * 1.1, Vec3::zeros());
        assert!(pose.validate().is_err());
        pose.global_rot = Mat3::identity();
        pose.theta[3] = Vec3::new(4.0, 0.0, 0.0);
        assert!(pose.validate().is_err());
        pose.theta[3] = Vec3::new(1.0, 1.0, 1.0);
        assert!(pose.validate().is_ok());
    }
}
