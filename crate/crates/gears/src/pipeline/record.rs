//! On-disk sequence format: a small JSON manifest next to a raw
//! little-endian f64 sidecar for the bulky arrays, plus the object mesh as
//! OBJ. The JSON stays diffable; the blobs load fast and round-trip exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geom::{sanitize_rotations, HandTrajectory, ObjectTrajectory, RigidMotion, TriMesh};
use crate::hand::{HandPose, HandShape, JointSet, Skeleton, JOINT_COUNT, SHAPE_COEFFS};
use crate::math::{Mat3, Vec3};
use crate::synth::SyntheticSequence;

use super::PipelineError;

pub const SCHEMA_VERSION: u32 = 1;
const FORMAT: &str = "gears-record";
/// Floats per trajectory frame: translation followed by the row-major rotation.
const FRAME_DIM: usize = 12;
const THETA_DIM: usize = 45;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

/// Articulation attached to a record: shape coefficients plus per-frame
/// joint angles. Global rotation and wrist position live in the hand
/// trajectory, so a full pose is the combination of both.
#[derive(Clone, Debug, PartialEq)]
pub struct GtPose {
    pub shape: HandShape,
    pub theta: Vec<[Vec3; 15]>,
}

/// One sequence in memory: trajectories, the object template mesh, and
/// whatever joint/pose annotations the producer attached. Synthesis writes
/// ground truth into the optional fields; inference writes its predictions
/// into the same slots.
#[derive(Clone, Debug)]
pub struct SequenceRecord {
    pub fps: f64,
    /// Mesh location as stored in the manifest, relative to the record file.
    pub object_mesh_path: PathBuf,
    pub object: TriMesh,
    pub object_traj: ObjectTrajectory,
    pub hand_traj: HandTrajectory,
    pub gt_joints: Option<Vec<JointSet>>,
    pub gt_pose: Option<GtPose>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct BlockMeta {
    name: String,
    /// Offset into the sidecar, in f64 elements.
    offset: usize,
    /// Length in f64 elements.
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordManifest {
    format: String,
    schema_version: u32,
    fps: f64,
    frames: usize,
    object_mesh_path: String,
    data_path: String,
    provenance: Provenance,
    blocks: Vec<BlockMeta>,
}

impl SequenceRecord {
    pub fn frames(&self) -> usize {
        self.hand_traj.frames.len()
    }

    /// Object mesh posed at frame `t`.
    pub fn object_at(&self, t: usize) -> TriMesh {
        let f = &self.object_traj.frames[t];
        self.object.transformed(&f.rotation, &f.translation)
    }

    /// Full hand poses, rebuilt from the stored articulation and the hand
    /// trajectory. `None` when the record carries no pose.
    pub fn poses(&self) -> Option<Vec<HandPose>> {
        let gt = self.gt_pose.as_ref()?;
        Some(
            gt.theta
                .iter()
                .zip(&self.hand_traj.frames)
                .map(|(theta, f)| HandPose {
                    theta: *theta,
                    global_rot: f.rotation,
                    wrist_pos: f.translation,
                })
                .collect(),
        )
    }

    pub fn from_synthetic(
        seq: &SyntheticSequence,
        skeleton: &Skeleton,
        object_mesh_path: &str,
        provenance: Provenance,
    ) -> Self {
        Self {
            fps: seq.fps,
            object_mesh_path: PathBuf::from(object_mesh_path),
            object: seq.object.clone(),
            object_traj: seq.object_traj.clone(),
            hand_traj: seq.hand_trajectory(),
            gt_joints: Some(seq.gt_joints(skeleton)),
            gt_pose: Some(GtPose {
                shape: seq.shape.clone(),
                theta: seq.poses.iter().map(|p| p.theta).collect(),
            }),
            provenance: provenance,
        }
    }
}

fn flatten_motion(frames: &[RigidMotion], out: &mut Vec<f64>) {
    for f in frames {
        out.extend_from_slice(&[f.translation.x, f.translation.y, f.translation.z]);
        for r in 0..3 {
            for c in 0..3 {
                out.push(f.rotation[(r, c)]);
            }
        }
    }
}

fn unflatten_motion(data: &[f64]) -> Vec<RigidMotion> {
    data.chunks_exact(FRAME_DIM)
        .map(|c| RigidMotion {
            translation: Vec3::new(c[0], c[1], c[2]),
            rotation: Mat3::new(c[3], c[4], c[5], c[6], c[7], c[8], c[9], c[10], c[11]),
        })
        .collect()
}

fn record_err(path: &Path, msg: impl Into<String>) -> PipelineError {
    PipelineError::Record { path: path.to_path_buf(), msg: msg.into() }
}

/// Writes `<path>` (JSON manifest), its `.bin` sidecar and the object OBJ.
/// `path` must end in `.json`; sibling files derive from its stem.
pub fn save_record(record: &SequenceRecord, path: &Path) -> Result<(), PipelineError> {
    let t = record.frames();
    if record.object_traj.frames.len() != t {
        return Err(record_err(
            path,
            format!(
                "object trajectory has {} frames, hand trajectory {t}",
                record.object_traj.frames.len()
            ),
        ));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;

    let mut data = Vec::new();
    let mut blocks = Vec::new();
    let mut push = |name: &str, payload: &[f64], data: &mut Vec<f64>| {
        blocks.push(BlockMeta { name: name.to_string(), offset: data.len(), len: payload.len() });
        data.extend_from_slice(payload);
    };

    let mut traj = Vec::with_capacity(t * FRAME_DIM);
    flatten_motion(&record.object_traj.frames, &mut traj);
    push("object_trajectory", &traj, &mut data);
    traj.clear();
    flatten_motion(&record.hand_traj.frames, &mut traj);
    push("hand_trajectory", &traj, &mut data);

    if let Some(joints) = &record.gt_joints {
        if joints.len() != t {
            return Err(record_err(path, format!("gt_joints has {} frames, expected {t}", joints.len())));
        }
        let mut rows = Vec::with_capacity(t * JOINT_COUNT * 3);
        for frame in joints {
            for j in frame {
                rows.extend_from_slice(&[j.x, j.y, j.z]);
            }
        }
        push("gt_joints", &rows, &mut data);
    }
    if let Some(pose) = &record.gt_pose {
        if pose.theta.len() != t {
            return Err(record_err(path, format!("gt_pose has {} frames, expected {t}", pose.theta.len())));
        }
        push("gt_beta", &pose.shape.beta, &mut data);
        let mut rows = Vec::with_capacity(t * THETA_DIM);
        for frame in &pose.theta {
            for v in frame {
                rows.extend_from_slice(&[v.x, v.y, v.z]);
            }
        }
        push("gt_theta", &rows, &mut data);
    }

    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| record_err(path, "record path needs a UTF-8 file stem"))?;
    let data_path = format!("{stem}.bin");
    let manifest = RecordManifest {
        format: FORMAT.to_string(),
        schema_version: SCHEMA_VERSION,
        fps: record.fps,
        frames: t,
        object_mesh_path: record
            .object_mesh_path
            .to_str()
            .ok_or_else(|| record_err(path, "object mesh path must be UTF-8"))?
            .to_string(),
        data_path: data_path.clone(),
        provenance: record.provenance.clone(),
        blocks,
    };

    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in &data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.join(&data_path), &bytes)?;
    record.object.write_obj(&dir.join(&record.object_mesh_path))?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a record manifest, its sidecar and the object mesh. Rotations are
/// sanitized: verbatim when orthonormal, re-orthonormalized under small
/// drift, rejected beyond 1e-4.
pub fn load_record(path: &Path) -> Result<SequenceRecord, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let manifest: RecordManifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(record_err(path, format!("unknown format {:?}", manifest.format)));
    }
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(record_err(
            path,
            format!("schema version {} unsupported (expected {SCHEMA_VERSION})", manifest.schema_version),
        ));
    }
    let t = manifest.frames;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));

    let bytes = std::fs::read(dir.join(&manifest.data_path))?;
    if bytes.len() % 8 != 0 {
        return Err(record_err(path, "sidecar length is not a multiple of 8"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let block = |name: &str, expected: Option<usize>| -> Result<Option<&[f64]>, PipelineError> {
        let Some(meta) = manifest.blocks.iter().find(|b| b.name == name) else {
            return Ok(None);
        };
        let end = meta.offset.checked_add(meta.len).filter(|&e| e <= data.len());
        let Some(end) = end else {
            return Err(record_err(path, format!("block {name} overruns the sidecar")));
        };
        if let Some(want) = expected {
            if meta.len != want {
                return Err(record_err(
                    path,
                    format!("block {name} holds {} floats, expected {want}", meta.len),
                ));
            }
        }
        Ok(Some(&data[meta.offset..end]))
    };

    let object_rows = block("object_trajectory", Some(t * FRAME_DIM))?
        .ok_or_else(|| record_err(path, "missing object_trajectory block"))?;
    let hand_rows = block("hand_trajectory", Some(t * FRAME_DIM))?
        .ok_or_else(|| record_err(path, "missing hand_trajectory block"))?;

    let mut object_frames = unflatten_motion(object_rows);
    let mut hand_frames = unflatten_motion(hand_rows);
    sanitize_rotations(&mut object_frames)?;
    sanitize_rotations(&mut hand_frames)?;

    let gt_joints = block("gt_joints", Some(t * JOINT_COUNT * 3))?.map(|rows| {
        rows.chunks_exact(JOINT_COUNT * 3)
            .map(|frame| {
                let mut js = [Vec3::zeros(); JOINT_COUNT];
                for (j, c) in js.iter_mut().zip(frame.chunks_exact(3)) {
                    *j = Vec3::new(c[0], c[1], c[2]);
                }
                js
            })
            .collect::<Vec<JointSet>>()
    });

    let gt_beta = block("gt_beta", Some(SHAPE_COEFFS))?;
    let gt_theta = block("gt_theta", Some(t * THETA_DIM))?;
    let gt_pose = match (gt_beta, gt_theta) {
        (Some(beta), Some(theta)) => {
            let mut shape = HandShape::default();
            shape.beta.copy_from_slice(beta);
            let theta = theta
                .chunks_exact(THETA_DIM)
                .map(|frame| {
                    let mut th = [Vec3::zeros(); 15];
                    for (v, c) in th.iter_mut().zip(frame.chunks_exact(3)) {
                        *v = Vec3::new(c[0], c[1], c[2]);
                    }
                    th
                })
                .collect();
            Some(GtPose { shape, theta })
        }
        (None, None) => None,
        _ => return Err(record_err(path, "gt_beta and gt_theta must appear together")),
    };

    let object = TriMesh::read_obj(&dir.join(&manifest.object_mesh_path))?;

    Ok(SequenceRecord {
        fps: manifest.fps,
        object_mesh_path: PathBuf::from(manifest.object_mesh_path),
        object,
        object_traj: ObjectTrajectory { frames: object_frames, fps: manifest.fps },
        hand_traj: HandTrajectory { frames: hand_frames, fps: manifest.fps },
        gt_joints,
        gt_pose,
        provenance: manifest.provenance,
    })
}
