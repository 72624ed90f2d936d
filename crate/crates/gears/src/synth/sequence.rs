//! Approach-and-grasp sequence synthesis.
//!
//! Each sequence interpolates from a perturbed, pulled-back start pose to a
//! synthesized grasp: joint angles and wrist position linearly, the global
//! rotation along the geodesic. Frame 0 and the final frame store the source
//! and target poses verbatim, so endpoint reproducibility is bitwise.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geom::{ObjectTrajectory, RigidMotion, TriMesh};
use crate::hand::{
    forward_kinematics, hand_surface_mesh, HandPose, HandShape, JointSet, Skeleton,
};
use crate::math::{rodrigues, slerp, split_seed, Mat3, Quat, Vec3};
use crate::metrics::intersection_volume_m3;

use super::grasp::{synthesize_grasp, GraspConfig, PALM_NORMAL_LOCAL};
use super::primitives::ObjectSpec;
use super::SynthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    /// Frames per sequence.
    pub frames: usize,
    pub fps: f64,
    /// Std-dev of the per-component joint-angle perturbation, radians.
    pub sigma_pose: f64,
    /// Std-dev of the global-rotation perturbation (axis-angle components).
    pub sigma_rot: f64,
    /// Wrist approach speed, meters per frame.
    pub approach_per_frame: f64,
    pub grasp: GraspConfig,
    /// Reject sequences whose sampled frames exceed this intersection volume.
    pub iv_filter_cm3: f64,
    /// Voxel edge for the rejection check, meters.
    pub iv_voxel: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            frames: 60,
            fps: 30.0,
            sigma_pose: 0.1,
            sigma_rot: 0.15,
            approach_per_frame: 0.004,
            grasp: GraspConfig::default(),
            iv_filter_cm3: crate::metrics::IV_FILTER_CM3,
            iv_voxel: crate::metrics::IV_VOXEL_M,
        }
    }
}

/// A generated ground-truth sequence. The object mesh is stored in its local
/// frame together with a per-frame rigid trajectory (constant here: objects
/// rest while the hand approaches); hand poses are world-frame.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub spec: ObjectSpec,
    pub object: TriMesh,
    pub object_traj: ObjectTrajectory,
    pub poses: Vec<HandPose>,
    pub shape: HandShape,
    pub fps: f64,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Wrist trajectory {R_H^t, w^t} as rigid motions.
    pub fn hand_trajectory(&self) -> crate::geom::HandTrajectory {
        crate::geom::HandTrajectory {
            frames: self
                .poses
                .iter()
                .map(|p| RigidMotion { rotation: p.global_rot, translation: p.wrist_pos })
                .collect(),
            fps: self.fps,
        }
    }

    /// Ground-truth joint positions per frame.
    pub fn gt_joints(&self, skeleton: &Skeleton) -> Vec<JointSet> {
        self.poses
            .iter()
            .map(|p| forward_kinematics(skeleton, &self.shape, p))
            .collect()
    }

    /// Object mesh posed at frame `t`.
    pub fn object_at(&self, t: usize) -> TriMesh {
        let m = &self.object_traj.frames[t];
        self.object.transformed(&m.rotation, &m.translation)
    }
}

fn random_object_spec(rng: &mut ChaCha8Rng) -> ObjectSpec {
    match rng.gen_range(0..4u32) {
        0 => ObjectSpec::Box {
            half_extents: [
                rng.gen_range(0.018..0.04),
                rng.gen_range(0.018..0.04),
                rng.gen_range(0.015..0.035),
            ],
        },
        1 => ObjectSpec::Sphere { radius: rng.gen_range(0.02..0.032) },
        2 => ObjectSpec::Cylinder {
            radius: rng.gen_range(0.016..0.028),
            height: rng.gen_range(0.04..0.09),
        },
        _ => ObjectSpec::Capsule {
            radius: rng.gen_range(0.014..0.024),
            height: rng.gen_range(0.03..0.06),
        },
    }
}

fn random_placement(rng: &mut ChaCha8Rng) -> RigidMotion {
    let axis_angle = Vec3::new(
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
    ) * std::f64::consts::PI;
    let translation = Vec3::new(
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.2..0.2),
    );
    RigidMotion { rotation: rodrigues(&axis_angle), translation }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Start pose: joint noise, a small random twist of the global rotation, and
/// the wrist pulled back along the world palm normal by the total approach
/// distance.
fn perturb_to_start(
    target: &HandPose,
    cfg: &SequenceConfig,
    rng: &mut ChaCha8Rng,
) -> HandPose {
    let mut theta = target.theta;
    for t in theta.iter_mut() {
        for i in 0..3 {
            t[i] += normal(rng, cfg.sigma_pose);
        }
        // Keep the perturbed angle in the valid open ball.
        let n = t.norm();
        if n >= std::f64::consts::PI {
            *t *= (std::f64::consts::PI - 1e-3) / n;
        }
    }
    let twist = Vec3::new(
        normal(rng, cfg.sigma_rot),
        normal(rng, cfg.sigma_rot),
        normal(rng, cfg.sigma_rot),
    );
    let global_rot = target.global_rot * rodrigues(&twist);
    let palm_world = target.global_rot * PALM_NORMAL_LOCAL;
    let retreat = cfg.approach_per_frame * cfg.frames as f64;
    let wrist_pos = target.wrist_pos - palm_world * retreat;
    HandPose { theta, global_rot, wrist_pos }
}

fn mat_to_quat(m: &Mat3) -> Quat {
    Quat::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(*m))
}

/// Interpolated pose at `tau` in (0, 1): linear in joint angles and wrist
/// position, geodesic in the global rotation.
fn lerp_pose(start: &HandPose, target: &HandPose, tau: f64) -> HandPose {
    let mut theta = [Vec3::zeros(); 15];
    for (out, (a, b)) in theta
        .iter_mut()
        .zip(start.theta.iter().zip(target.theta.iter()))
    {
        *out = a + (b - a) * tau;
    }
    let q = slerp(&mat_to_quat(&start.global_rot), &mat_to_quat(&target.global_rot), tau);
    HandPose {
        theta,
        global_rot: q.to_rotation_matrix().into_inner(),
        wrist_pos: start.wrist_pos + (target.wrist_pos - start.wrist_pos) * tau,
    }
}

/// Attempt accounting for one generated sequence.
#[derive(Clone, Copy, Debug, Default)]
pub struct SynthStats {
    /// Rounds discarded because no grasp was found on the sampled object.
    pub grasp_rejections: usize,
    /// Rounds discarded because an approach frame swept through the object.
    pub sweep_rejections: usize,
}

/// Generates one sequence from a seed. Identical seeds reproduce identical
/// sequences, byte for byte after serialization.
pub fn generate_sequence(
    skeleton: &Skeleton,
    cfg: &SequenceConfig,
    seed: u64,
) -> Result<SyntheticSequence, SynthError> {
    generate_sequence_with_stats(skeleton, cfg, seed).map(|(seq, _)| seq)
}

/// As [`generate_sequence`], also reporting how many candidate rounds were
/// rejected along the way.
pub fn generate_sequence_with_stats(
    skeleton: &Skeleton,
    cfg: &SequenceConfig,
    seed: u64,
) -> Result<(SyntheticSequence, SynthStats), SynthError> {
    assert!(cfg.frames >= 2, "a sequence needs at least two frames");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = SynthStats::default();

    for _round in 0..cfg.grasp.max_attempts {
        let spec = random_object_spec(&mut rng);
        let object = spec.mesh();
        let grasp = match synthesize_grasp(skeleton, &object, &cfg.grasp, &mut rng) {
            Ok(g) => g,
            Err(SynthError::GraspNotFound { .. }) => {
                stats.grasp_rejections += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let placement = random_placement(&mut rng);

        let target = HandPose {
            theta: grasp.pose.theta,
            global_rot: placement.rotation * grasp.pose.global_rot,
            wrist_pos: placement.apply(&grasp.pose.wrist_pos),
        };
        let start = perturb_to_start(&target, cfg, &mut rng);

        let t_last = cfg.frames - 1;
        let mut poses = Vec::with_capacity(cfg.frames);
        poses.push(start.clone());
        for t in 1..t_last {
            poses.push(lerp_pose(&start, &target, t as f64 / t_last as f64));
        }
        poses.push(target.clone());

        let object_traj = ObjectTrajectory {
            frames: vec![placement.clone(); cfg.frames],
            fps: cfg.fps,
        };
        let seq = SyntheticSequence {
            spec,
            object,
            object_traj,
            poses,
            shape: grasp.shape,
            fps: cfg.fps,
        };

        // The grasp itself already passed the filter; sweep every frame to
        // catch interpolation passing through the object. Frames away from
        // the object cost almost nothing (disjoint bounding boxes).
        let mut ok = true;
        for t in 0..cfg.frames {
            let hand = hand_surface_mesh(skeleton, &seq.shape, &seq.poses[t]);
            let obj = seq.object_at(t);
            if intersection_volume_m3(&hand, &obj, cfg.iv_voxel) * 1e6 > cfg.iv_filter_cm3 {
                ok = false;
                break;
            }
        }
        if !ok {
            stats.sweep_rejections += 1;
            continue;
        }
        return Ok((seq, stats));
    }
    Err(SynthError::GraspNotFound { attempts: cfg.grasp.max_attempts })
}

/// Generates `count` sequences; sequence `i` always sees the stream derived
/// from `split_seed(master_seed, i)` so corpora regenerate identically.
pub fn generate_corpus(
    skeleton: &Skeleton,
    cfg: &SequenceConfig,
    master_seed: u64,
    count: usize,
) -> Result<Vec<SyntheticSequence>, SynthError> {
    (0..count)
        .map(|i| generate_sequence(skeleton, cfg, split_seed(master_seed, i as u64)))
        .collect()
}
