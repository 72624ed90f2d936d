//! Procedural grasp synthesis on convex primitive objects.
//!
//! A grasp attempt orients the palm over a random surface point at a small
//! standoff, picks a random finger heading in the tangent plane, and slides
//! the wrist back along that heading so the point sits under the fingertip
//! arc rather than under the wrist. Each finger then curls (fixed
//! MCP/PIP/DIP ratios around per-finger axes) until its fingertip surface
//! just reaches the object. Attempts are rejected unless enough fingertips
//! touch and the hand–object intersection volume stays under the filter
//! threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;

use crate::geom::{sample_surface, signed_distance_convex, TriMesh};
use crate::hand::{
    forward_kinematics, hand_surface_mesh, HandPose, HandShape, Skeleton, ARTICULATED, TIP_JOINTS,
};
use crate::math::{Mat3, Vec3};
use crate::metrics::{intersection_volume_m3, IV_FILTER_CM3, IV_VOXEL_M};

use super::SynthError;

/// Palm-side normal in the hand's local frame: fingers run along +x and the
/// palm faces -z.
pub const PALM_NORMAL_LOCAL: Vec3 = Vec3::new(0.0, 0.0, -1.0);

/// Per-joint curl weights for (MCP, PIP, DIP).
const CURL_WEIGHTS: [f64; 3] = [0.9, 1.1, 0.8];

/// Wrist setback along the finger heading, meters. Curled fingertips sweep
/// the palm-plane band this far ahead of the wrist, so the sampled surface
/// point lands under the finger arc while the object stays within reach of
/// the wrist-centered sensing cube.
const SETBACK_RANGE: (f64, f64) = (0.045, 0.095);

/// Sideways wrist offset range, meters; varies which fingers engage.
const LATERAL_MAX: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    /// Gap between the palm slab's underside and the surface point, meters.
    pub standoff: f64,
    /// Target clearance between fingertip surface and object at contact.
    pub contact_margin: f64,
    /// A fingertip within this distance of the surface counts as a contact.
    pub contact_max: f64,
    /// Minimum number of fingertip contacts for a grasp to be accepted.
    pub min_contacts: usize,
    /// Attempts before giving up.
    pub max_attempts: usize,
    /// Upper bound on the base curl parameter, radians.
    pub max_curl: f64,
    /// Reject grasps whose hand–object intersection exceeds this, cm^3.
    pub iv_filter_cm3: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            standoff: 0.005,
            contact_margin: 0.0005,
            contact_max: 0.005,
            min_contacts: 2,
            max_attempts: 50,
            max_curl: 1.25,
            iv_filter_cm3: IV_FILTER_CM3,
        }
    }
}

/// A static grasp: hand shape plus the full pose, in the object's local
/// frame (object centered at its own origin).
#[derive(Clone, Debug)]
pub struct Grasp {
    pub shape: HandShape,
    pub pose: HandPose,
    pub fingertip_contacts: usize,
}

/// Distance from the palm-slab underside plane to the wrist origin.
fn palm_depth(skeleton: &Skeleton) -> f64 {
    (skeleton.palm.center[2] - skeleton.palm.half_extents[2]).abs()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Curl axis for finger `f` in the hand frame: perpendicular to the rest
/// proximal-phalanx direction and to the palm normal, so positive angles
/// close the finger toward the palm.
fn curl_axis(skeleton: &Skeleton, finger: usize) -> Vec3 {
    let mcp = ARTICULATED[3 * finger];
    let pip = ARTICULATED[3 * finger + 1];
    let dir = (skeleton.rest_joints[pip] - skeleton.rest_joints[mcp]).normalize();
    dir.cross(&PALM_NORMAL_LOCAL).normalize()
}

fn set_finger_curl(theta: &mut [Vec3; 15], finger: usize, axis: &Vec3, curl: f64) {
    for (j, w) in CURL_WEIGHTS.iter().enumerate() {
        theta[3 * finger + j] = axis * (w * curl);
    }
}

/// Signed clearance between the fingertip surface and the object: distance
/// from the tip joint to the object surface (negative inside), minus the tip
/// capsule radius.
fn tip_clearance(
    skeleton: &Skeleton,
    shape: &HandShape,
    pose: &HandPose,
    finger: usize,
    object: &TriMesh,
) -> f64 {
    let joints = forward_kinematics(skeleton, shape, pose);
    let tip = TIP_JOINTS[finger];
    let tip_radius = skeleton.capsule_radius[tip - 1];
    signed_distance_convex(&joints[tip], object) - tip_radius
}

/// Curls one finger until its tip reaches `margin` clearance: a coarse scan
/// brackets the crossing, then bisection refines it. Returns the curl left in
/// place (max curl when the finger never reaches the surface).
fn curl_to_contact(
    skeleton: &Skeleton,
    shape: &HandShape,
    pose: &mut HandPose,
    finger: usize,
    axis: &Vec3,
    object: &TriMesh,
    cfg: &GraspConfig,
) -> f64 {
    const SCAN_STEPS: usize = 16;
    const BISECT_ITERS: usize = 30;

    let clearance_at = |pose: &mut HandPose, c: f64| {
        set_finger_curl(&mut pose.theta, finger, axis, c);
        tip_clearance(skeleton, shape, pose, finger, object)
    };

    let mut lo = 0.0;
    let mut lo_clear = clearance_at(pose, 0.0);
    if lo_clear <= cfg.contact_margin {
        set_finger_curl(&mut pose.theta, finger, axis, 0.0);
        return 0.0;
    }
    let mut bracket = None;
    for i in 1..=SCAN_STEPS {
        let c = cfg.max_curl * i as f64 / SCAN_STEPS as f64;
        let clear = clearance_at(pose, c);
        if clear <= cfg.contact_margin {
            bracket = Some((lo, c));
            break;
        }
        lo = c;
        lo_clear = clear;
    }
    let _ = lo_clear;
    let Some((mut a, mut b)) = bracket else {
        set_finger_curl(&mut pose.theta, finger, axis, cfg.max_curl);
        return cfg.max_curl;
    };
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (a + b);
        if clearance_at(pose, mid) <= cfg.contact_margin {
            b = mid;
        } else {
            a = mid;
        }
    }
    set_finger_curl(&mut pose.theta, finger, axis, b);
    b
}

/// Synthesizes a grasp of `object` (given in its local frame). Consumes the
/// RNG stream deterministically: the same seed state always yields the same
/// grasp.
pub fn synthesize_grasp(
    skeleton: &Skeleton,
    object: &TriMesh,
    cfg: &GraspConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Grasp, SynthError> {
    let depth = palm_depth(skeleton);
    for _attempt in 0..cfg.max_attempts {
        let mut beta = [0.0; 10];
        for b in &mut beta {
            *b = 0.5 * (rng.gen::<f64>() - 0.5);
        }
        let shape = HandShape { beta };

        let surface = sample_surface(object, 1, rng.gen())?;
        let p = surface.points[0];
        let n = surface.normals[0];

        let tangent = {
            let a = random_unit(rng);
            let t = a - n * a.dot(&n);
            if t.norm() < 0.1 {
                continue;
            }
            t.normalize()
        };
        let binormal = n.cross(&tangent);
        let global_rot = Mat3::from_columns(&[tangent, binormal, n]);
        let setback = SETBACK_RANGE.0 + (SETBACK_RANGE.1 - SETBACK_RANGE.0) * rng.gen::<f64>();
        let lateral = LATERAL_MAX * (2.0 * rng.gen::<f64>() - 1.0);
        let wrist_pos = p + n * (depth + cfg.standoff) - tangent * setback - binormal * lateral;

        let mut pose = HandPose::rest(global_rot, wrist_pos);
        for finger in 0..5 {
            let axis = curl_axis(skeleton, finger);
            curl_to_contact(skeleton, &shape, &mut pose, finger, &axis, object, cfg);
        }

        let contacts = (0..5)
            .filter(|&f| tip_clearance(skeleton, &shape, &pose, f, object) <= cfg.contact_max)
            .count();
        if contacts < cfg.min_contacts {
            continue;
        }
        if pose.validate().is_err() {
            continue;
        }

        let hand_mesh = hand_surface_mesh(skeleton, &shape, &pose);
        let iv_cm3 = intersection_volume_m3(&hand_mesh, object, IV_VOXEL_M) * 1e6;
        if iv_cm3 > cfg.iv_filter_cm3 {
            continue;
        }

        return Ok(Grasp { shape, pose, fingertip_contacts: contacts });
    }
    Err(SynthError::GraspNotFound { attempts: cfg.max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::primitives::ObjectSpec;
    use rand::SeedableRng;

    #[test]
    fn grasps_are_found_and_pass_their_own_filters() {
        let skeleton = Skeleton::default_template();
        let cfg = GraspConfig::default();
        let specs = [
            ObjectSpec::Sphere { radius: 0.028 },
            ObjectSpec::Cylinder { radius: 0.02, height: 0.07 },
            ObjectSpec::Box { half_extents: [0.03, 0.025, 0.02] },
        ];
        for (i, spec) in specs.iter().enumerate() {
            let object = spec.mesh();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let grasp = synthesize_grasp(&skeleton, &object, &cfg, &mut rng)
                .unwrap_or_else(|e| panic!("{spec:?}: {e}"));
            assert!(grasp.fingertip_contacts >= cfg.min_contacts, "{spec:?}");
            grasp.pose.validate().unwrap();

            let hand = hand_surface_mesh(&skeleton, &grasp.shape, &grasp.pose);
            let iv = intersection_volume_m3(&hand, &object, IV_VOXEL_M) * 1e6;
            assert!(iv <= cfg.iv_filter_cm3, "{spec:?}: iv {iv}");

            // Contacted fingertips really are near the surface.
            let joints = forward_kinematics(&skeleton, &grasp.shape, &grasp.pose);
            let near = TIP_JOINTS
                .iter()
                .filter(|&&t| {
                    let d = signed_distance_convex(&joints[t], &object)
                        - skeleton.capsule_radius[t - 1];
                    d <= cfg.contact_max
                })
                .count();
            assert!(near >= cfg.min_contacts);
        }
    }

    #[test]
    fn grasp_synthesis_is_deterministic() {
        let skeleton = Skeleton::default_template();
        let object = ObjectSpec::Sphere { radius: 0.03 }.mesh();
        let cfg = GraspConfig::default();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            synthesize_grasp(&skeleton, &object, &cfg, &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.pose.theta, b.pose.theta);
        assert_eq!(a.pose.global_rot, b.pose.global_rot);
        assert_eq!(a.pose.wrist_pos, b.pose.wrist_pos);
        assert_eq!(a.shape.beta, b.shape.beta);
    }

    #[test]
    fn curl_axes_close_fingers_toward_the_palm() {
        let skeleton = Skeleton::default_template();
        let shape = HandShape::default();
        // Curling any finger should lower its tip along -z (toward the palm
        // side) relative to the rest pose.
        let rest = forward_kinematics(
            &skeleton,
            &shape,
            &HandPose::rest(Mat3::identity(), Vec3::zeros()),
        );
        for finger in 0..5 {
            let mut pose = HandPose::rest(Mat3::identity(), Vec3::zeros());
            let axis = curl_axis(&skeleton, finger);
            set_finger_curl(&mut pose.theta, finger, &axis, 0.8);
            let curled = forward_kinematics(&skeleton, &shape, &pose);
            let tip = TIP_JOINTS[finger];
            assert!(
                curled[tip].z < rest[tip].z - 0.01,
                "finger {finger}: tip z {} vs rest {}",
                curled[tip].z,
                rest[tip].z
            );
        }
    }

    #[test]
    fn impossible_object_reports_grasp_not_found() {
        let skeleton = Skeleton::default_template();
        // A sphere far too small for any fingertip to reach ≥2 contacts.
        let object = ObjectSpec::Sphere { radius: 0.004 }.mesh();
        let cfg = GraspConfig { max_attempts: 5, ..GraspConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match synthesize_grasp(&skeleton, &object, &cfg, &mut rng) {
            Err(SynthError::GraspNotFound { attempts: 5 }) => {}
            other => panic!("expected GraspNotFound, got {other:?}"),
        }
    }
}
