//! Scene-to-feature sensors: wrist-cube crop, surface sampling, wrist
//! canonicalization, trajectory windows and joint-local radius queries.

use super::grid::HashGrid;
use super::mesh::TriMesh;
use super::trajectory::HandTrajectory;
use super::GeomError;
use crate::hand::{JointSet, TemplateFrames, JOINT_COUNT};
use crate::math::{split_seed, Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sampled surface points with their (unit) face normals.
#[derive(Clone, Debug, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sub-mesh of the faces whose vertices all lie inside the axis-aligned cube
/// of side `side` in the wrist frame (centered on the wrist, axes following
/// the hand's global rotation). Interior vertices are kept and re-indexed;
/// the result may be empty.
pub fn crop_cube(mesh: &TriMesh, wrist: &Vec3, global_rot: &Mat3, side: f64) -> TriMesh {
    let half = side * 0.5;
    let rt = global_rot.transpose();
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let mut normals = mesh.normals.as_ref().map(|_| Vec::new());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let local = rt * (v - wrist);
        if local.x.abs() <= half && local.y.abs() <= half && local.z.abs() <= half {
            remap[i] = vertices.len() as u32;
            vertices.push(*v);
            if let (Some(out), Some(ns)) = (normals.as_mut(), mesh.normals.as_ref()) {
                out.push(ns[i]);
            }
        }
    }
    let faces = mesh
        .faces
        .iter()
        .filter(|f| f.iter().all(|&ix| remap[ix as usize] != u32::MAX))
        .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
        .collect();
    let mut out = TriMesh::new(vertices, faces).expect("remapped indices are in range");
    out.normals = normals;
    out
}

/// Area-weighted uniform surface sampling with barycentric placement and
/// flat (face) normals. Deterministic in `seed`; sampling with replacement,
/// so any `n` is valid. Fails with [`GeomError::EmptyMesh`] when the mesh
/// has no positive-area faces.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeomError> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if mesh.faces.is_empty() || total <= 0.0 {
        return Err(GeomError::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = PointCloud {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.face_corners(face);
        // sqrt trick: uniform over the triangle.
        let r1 = rng.gen::<f64>().sqrt();
        let r2 = rng.gen::<f64>();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        cloud.points.push(p);
        cloud.normals.push(mesh.face_normal(face));
    }
    Ok(cloud)
}

/// Expresses a cloud in the wrist frame: points `R^T (p - w)`, normals
/// `R^T n`. Applying one rigid transform to cloud, wrist and rotation leaves
/// the output unchanged up to rounding.
pub fn canonicalize_to_wrist(cloud: &PointCloud, wrist: &Vec3, global_rot: &Mat3) -> PointCloud {
    let rt = global_rot.transpose();
    PointCloud {
        points: cloud.points.iter().map(|p| rt * (p - wrist)).collect(),
        normals: cloud.normals.iter().map(|n| rt * n).collect(),
    }
}

/// One entry of a trajectory window, expressed relative to the center frame:
/// `translation = R_t^T (w_s - w_t)`, `rotation = R_t^T R_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowFrame {
    pub translation: Vec3,
    pub rotation: Mat3,
}

/// 2k+1 wrist poses sampled uniformly over `[t - window, t + window]`
/// seconds and expressed relative to frame `t`. Out-of-range samples clamp
/// to the first/last frame, so boundary windows repeat the end poses.
pub fn sample_trajectory_window(
    traj: &HandTrajectory,
    t: usize,
    k: usize,
    window_seconds: f64,
) -> Vec<WindowFrame> {
    assert!(t < traj.frames.len(), "frame {t} out of range");
    let center = &traj.frames[t];
    let rt = center.rotation.transpose();
    let last = traj.frames.len() as i64 - 1;
    let mut out = Vec::with_capacity(2 * k + 1);
    for i in -(k as i64)..=(k as i64) {
        let offset_s = if k == 0 { 0.0 } else { i as f64 * window_seconds / k as f64 };
        let s = (t as i64 + (offset_s * traj.fps).round() as i64).clamp(0, last) as usize;
        let f = &traj.frames[s];
        out.push(WindowFrame {
            translation: rt * (f.translation - center.translation),
            rotation: rt * f.rotation,
        });
    }
    out
}

/// Surface geometry sensed around one joint, in that joint's template frame:
/// points are centered on the joint (all norms < radius) and normals are
/// unit length.
#[derive(Clone, Debug, Default)]
pub struct JointSensorSample {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

/// For every joint, gathers the sampled surface points strictly within
/// `radius` of it and expresses them (and their normals) in the joint's
/// template frame. Sets larger than `max_points` are randomly subsampled
/// with a per-joint stream derived from `seed`. A non-positive radius
/// returns 21 empty samples.
pub fn joint_radius_query(
    cloud: &PointCloud,
    joints: &JointSet,
    frames: &TemplateFrames,
    radius: f64,
    max_points: usize,
    seed: u64,
) -> Vec<JointSensorSample> {
    if radius <= 0.0 || cloud.is_empty() {
        return vec![JointSensorSample::default(); JOINT_COUNT];
    }
    let grid = HashGrid::build(&cloud.points, radius);
    (0..JOINT_COUNT)
        .map(|k| {
            let mut hits = grid.query(&cloud.points, &joints[k], radius);
            if hits.len() > max_points {
                let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, k as u64));
                // Partial Fisher-Yates: the first max_points entries become
                // the selection.
                for i in 0..max_points {
                    let j = rng.gen_range(i..hits.len());
                    hits.swap(i, j);
                }
                hits.truncate(max_points);
            }
            let mut sample = JointSensorSample {
                points: Vec::with_capacity(hits.len()),
                normals: Vec::with_capacity(hits.len()),
            };
            for &i in &hits {
                let i = i as usize;
                sample.points.push(frames.to_template(k, &cloud.points[i]));
                sample.normals.push(frames.dir_to_template(k, &cloud.normals[i]));
            }
            sample
        })
        .collect()
}
