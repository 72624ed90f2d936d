//! Watertight capsule-union surface for the posed hand, plus the fixed
//! linear regressor mapping surface vertices back to joints.

use super::kinematics::{fk_with_frames, HandPose, JointSet};
use super::skeleton::{HandShape, Skeleton, BONE_COUNT, JOINT_COUNT};
use super::HandError;
use crate::geom::TriMesh;
use crate::math::{orthogonal_unit, Vec3};

/// Deterministic vertex layout of the hand surface mesh: 20 bone capsules of
/// 42 vertices each, followed by the 8 palm-slab corners. Within a capsule:
/// bottom pole, then five 8-vertex rings from the parent cap to the child
/// cap (rings 1 and 4 sit exactly at the parent/child joints), then the top
/// pole.
pub struct HandMeshLayout;

impl HandMeshLayout {
    pub const SEGMENTS: usize = 8;
    pub const RINGS: usize = 5;
    pub const VERTS_PER_CAPSULE: usize = 2 + Self::RINGS * Self::SEGMENTS;
    pub const PALM_VERTS: usize = 8;

    pub const fn capsule_base(bone: usize) -> usize {
        bone * Self::VERTS_PER_CAPSULE
    }

    pub const fn vertex_count() -> usize {
        BONE_COUNT * Self::VERTS_PER_CAPSULE + Self::PALM_VERTS
    }

    /// Vertex indices of the ring centered at the parent joint of `bone`.
    pub fn parent_ring(bone: usize) -> impl Iterator<Item = usize> {
        let base = Self::capsule_base(bone) + 1 + Self::SEGMENTS;
        base..base + Self::SEGMENTS
    }

    /// Vertex indices of the ring centered at the child joint of `bone`.
    pub fn child_ring(bone: usize) -> impl Iterator<Item = usize> {
        let base = Self::capsule_base(bone) + 1 + 3 * Self::SEGMENTS;
        base..base + Self::SEGMENTS
    }
}

/// Number of vertices [`joint_regressor`] expects.
pub fn regressor_vertex_count() -> usize {
    HandMeshLayout::vertex_count()
}

/// Builds the posed hand surface: one capsule per bone (radius from the
/// skeleton table, length from the shaped rest bone) rigidly carried by the
/// parent joint's template frame, plus a box slab over the palm carried by
/// the wrist frame. Vertices are emitted in the fixed [`HandMeshLayout`]
/// order, so equal poses yield byte-identical meshes and rigidly transformed
/// poses yield identically transformed vertices.
pub fn hand_surface_mesh(skeleton: &Skeleton, shape: &HandShape, pose: &HandPose) -> TriMesh {
    let (joints, frames) = fk_with_frames(skeleton, shape, pose);
    let s = HandMeshLayout::SEGMENTS;
    let mut vertices = Vec::with_capacity(HandMeshLayout::vertex_count());
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for bone in 0..BONE_COUNT {
        let child = bone + 1;
        let parent = skeleton.parent[child] as usize;
        let rest_dir = (skeleton.rest_joints[child] - skeleton.rest_joints[parent]).normalize();
        let len = skeleton.scaled_rest_bone(shape, child).norm();
        let r = skeleton.capsule_radius[bone];
        let u = orthogonal_unit(&rest_dir);
        let v = rest_dir.cross(&u);
        let base = vertices.len() as u32;

        let emit = |vertices: &mut Vec<Vec3>, offset: Vec3| {
            vertices.push(joints[parent] + frames.rotation[parent] * offset);
        };
        emit(&mut vertices, rest_dir * -r);
        let cap = r / std::f64::consts::SQRT_2;
        let rings: [(f64, f64); HandMeshLayout::RINGS] =
            [(-cap, cap), (0.0, r), (len * 0.5, r), (len, r), (len + cap, cap)];
        for (z, ring_r) in rings {
            for i in 0..s {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / s as f64;
                let radial = u * phi.cos() + v * phi.sin();
                emit(&mut vertices, rest_dir * z + radial * ring_r);
            }
        }
        emit(&mut vertices, rest_dir * (len + r));

        let ring = |n: usize, i: usize| base + 1 + (n * s + i % s) as u32;
        for i in 0..s {
            faces.push([base, ring(0, i + 1), ring(0, i)]);
        }
        for n in 0..HandMeshLayout::RINGS - 1 {
            for i in 0..s {
                let (a, a1) = (ring(n, i), ring(n, i + 1));
                let (b, b1) = (ring(n + 1, i), ring(n + 1, i + 1));
                faces.push([a, a1, b1]);
                faces.push([a, b1, b]);
            }
        }
        let top = base + 1 + (HandMeshLayout::RINGS * s) as u32;
        for i in 0..s {
            faces.push([top, ring(HandMeshLayout::RINGS - 1, i), ring(HandMeshLayout::RINGS - 1, i + 1)]);
        }
    }

    // Palm slab, wrist frame. Corner i has bit pattern (x, y, z).
    let palm_base = vertices.len() as u32;
    let c = Vec3::new(skeleton.palm.center[0], skeleton.palm.center[1], skeleton.palm.center[2]);
    let h = Vec3::new(
        skeleton.palm.half_extents[0],
        skeleton.palm.half_extents[1],
        skeleton.palm.half_extents[2],
    );
    for i in 0..8u32 {
        let corner = Vec3::new(
            c.x + if i & 1 != 0 { h.x } else { -h.x },
            c.y + if i & 2 != 0 { h.y } else { -h.y },
            c.z + if i & 4 != 0 { h.z } else { -h.z },
        );
        vertices.push(joints[0] + frames.rotation[0] * corner);
    }
    const BOX_QUADS: [[u32; 4]; 6] = [
        [1, 3, 7, 5],
        [0, 4, 6, 2],
        [2, 6, 7, 3],
        [0, 1, 5, 4],
        [4, 5, 7, 6],
        [0, 2, 3, 1],
    ];
    for q in BOX_QUADS {
        faces.push([palm_base + q[0], palm_base + q[1], palm_base + q[2]]);
        faces.push([palm_base + q[0], palm_base + q[2], palm_base + q[3]]);
    }

    TriMesh::new(vertices, faces).expect("hand mesh construction is index-safe")
}

/// Fixed sparse linear map from hand-mesh vertices to joints: every joint is
/// the mean of the capsule ring centered on it (the wrist uses the parent
/// ring of the thumb metacarpal capsule). Matches [`forward_kinematics`] to
/// within accumulated rounding, far below 1e-6 m.
pub fn joint_regressor(vertices: &[Vec3]) -> Result<JointSet, HandError> {
    let expected = regressor_vertex_count();
    if vertices.len() != expected {
        return Err(HandError::VertexCountMismatch { expected, got: vertices.len() });
    }
    let w = 1.0 / HandMeshLayout::SEGMENTS as f64;
    let mut joints = [Vec3::zeros(); JOINT_COUNT];
    for i in HandMeshLayout::parent_ring(0) {
        joints[0] += vertices[i] * w;
    }
    for joint in 1..JOINT_COUNT {
        for i in HandMeshLayout::child_ring(joint - 1) {
            joints[joint] += vertices[i] * w;
        }
    }
    Ok(joints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::forward_kinematics;
    use crate::math::{rodrigues, Mat3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn posed(seed: u64) -> (Skeleton, HandShape, HandPose) {
        let s = Skeleton::default_template();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = HandShape::default();
        for b in shape.beta.iter_mut() {
            *b = rng.gen_range(-1.5..1.5);
        }
        let mut pose = HandPose::rest(
            rodrigues(&Vec3::new(rng.gen_range(-1.0..1.0), 0.4, -0.2)),
            Vec3::new(0.1, -0.05, 0.2),
        );
        for t in pose.theta.iter_mut() {
            *t = Vec3::new(
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
            );
        }
        (s, shape, pose)
    }

    #[test]
    fn mesh_has_expected_layout_and_is_watertight() {
        let (s, shape, pose) = posed(21);
        let mesh = hand_surface_mesh(&s, &shape, &pose);
        assert_eq!(mesh.vertices.len(), HandMeshLayout::vertex_count());
        assert_eq!(mesh.vertices.len(), 848);
        assert!(mesh.is_watertight(), "every edge must be shared by exactly two faces");
    }

    #[test]
    fn rest_mesh_bounding_box_spans_a_hand_sized_range() {
        let s = Skeleton::default_template();
        let mesh = hand_surface_mesh(
            &s,
            &HandShape::default(),
            &HandPose::rest(Mat3::identity(), Vec3::zeros()),
        );
        let (lo, hi) = mesh.aabb();
        let span = hi.x - lo.x;
        assert!(
            (0.18..=0.22).contains(&span),
            "finger-axis span {span:.3} m outside expected hand size"
        );
    }

    #[test]
    fn regressor_matches_forward_kinematics() {
        for seed in [22u64, 23, 24] {
            let (s, shape, pose) = posed(seed);
            let mesh = hand_surface_mesh(&s, &shape, &pose);
            let joints = forward_kinematics(&s, &shape, &pose);
            let regressed = joint_regressor(&mesh.vertices).unwrap();
            for k in 0..JOINT_COUNT {
                assert!(
                    (regressed[k] - joints[k]).norm() < 1e-6,
                    "joint {k} regressed {:.2e} m off FK",
                    (regressed[k] - joints[k]).norm()
                );
            }
        }
    }

    #[test]
    fn regressor_rejects_wrong_vertex_count() {
        let verts = vec![Vec3::zeros(); 10];
        match joint_regressor(&verts) {
            Err(HandError::VertexCountMismatch { expected, got }) => {
                assert_eq!(expected, 848);
                assert_eq!(got, 10);
            }
            other => panic!("expected VertexCountMismatch, got {other:?}"),
        }
    }

    #[test]
    fn mesh_is_rigidly_equivariant() {
        let (s, shape, pose) = posed(25);
        let r = rodrigues(&Vec3::new(0.7, -1.1, 0.4));
        let t = Vec3::new(-0.2, 0.33, 0.05);
        let moved = HandPose {
            theta: pose.theta,
            global_rot: r * pose.global_rot,
            wrist_pos: r * pose.wrist_pos + t,
        };
        let a = hand_surface_mesh(&s, &shape, &pose);
        let b = hand_surface_mesh(&s, &shape, &moved);
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            assert!((r * va + t - vb).norm() < 1e-9);
        }
        assert_eq!(a.faces, b.faces);
    }
}
