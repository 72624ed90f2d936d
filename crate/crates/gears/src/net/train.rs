//! Two-stage training: the initialization net learns wrist-relative joints
//! from per-frame crops, then freezes while the displacement net learns
//! sequence-level refinements on top of its predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::disp::DispNetConfig;
use super::features::{
    disp_inputs, init_point_rows, sense_frame, window_row, DispInputs, SensingConfig,
};
use super::init::{joints_to_global, joints_to_relative, InitNetConfig, INIT_OUT_DIM};
use crate::geom::{HandTrajectory, ObjectTrajectory, PointCloud, TriMesh};
use crate::hand::{JointSet, Skeleton, JOINT_COUNT};
use crate::math::split_seed;
use crate::nn::{Graph, NnError, NodeId, ParamStore, Tensor};
use crate::synth::SyntheticSequence;

/// The three network-side configs that must agree between training and
/// inference.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nets {
    pub sensing: SensingConfig,
    pub init: InitNetConfig,
    pub disp: DispNetConfig,
}

impl Nets {
    pub fn register(&self, store: &mut ParamStore, seed: u64) {
        self.init.register(&self.sensing, store, seed);
        self.disp.register(store, seed);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub lr_init: f64,
    pub lr_disp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { stage1_epochs: 400, stage2_epochs: 400, lr_init: 1e-3, lr_disp: 1e-3 }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: u8,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("resume state ({stage1}, {stage2}) is not a prefix of the two-stage schedule")]
    InvalidResume { stage1: usize, stage2: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One training sequence: the scene plus ground-truth joints per frame.
#[derive(Clone, Debug)]
pub struct TrainSequence {
    pub object: TriMesh,
    pub object_traj: ObjectTrajectory,
    pub hand: HandTrajectory,
    pub gt_joints: Vec<JointSet>,
}

impl TrainSequence {
    pub fn from_synthetic(seq: &SyntheticSequence, skeleton: &Skeleton) -> Self {
        Self {
            object: seq.object.clone(),
            object_traj: seq.object_traj.clone(),
            hand: seq.hand_trajectory(),
            gt_joints: seq.gt_joints(skeleton),
        }
    }

    fn frames(&self) -> usize {
        self.hand.frames.len()
    }

    fn posed_object(&self, t: usize) -> TriMesh {
        let f = &self.object_traj.frames[t];
        self.object.transformed(&f.rotation, &f.translation)
    }
}

/// Mean squared error per joint: sum of squared coordinate differences
/// divided by the number of joints summed over (rows*cols/3), matching
/// ‖Δ‖² averaged over frames and joints.
pub fn joint_loss(g: &mut Graph, pred: NodeId, gt: NodeId) -> Result<NodeId, NnError> {
    let numel = g.value(gt).numel();
    let ssd = g.sum_sq_diff(pred, gt)?;
    g.scale(ssd, 3.0 / numel as f64)
}

/// Stage-1 inputs for one sequence, sensed once and reused every epoch.
struct InitBatch {
    point_rows: Tensor,
    segments: Vec<(u32, u32)>,
    window_rows: Tensor,
    gt_rows: Tensor,
}

fn sense_init_batch(seq: &TrainSequence, sensing: &SensingConfig, seed: u64) -> InitBatch {
    let t_count = seq.frames();
    let mut rows: Vec<f64> = Vec::new();
    let mut segments = Vec::with_capacity(t_count);
    let mut windows = Vec::with_capacity(t_count * sensing.window_dim());
    let mut gt = Vec::with_capacity(t_count * INIT_OUT_DIM);
    for t in 0..t_count {
        let posed = seq.posed_object(t);
        let sensed = sense_frame(&posed, &seq.hand, t, sensing, split_seed(seed, t as u64));
        let pts = init_point_rows(&sensed, sensing);
        let start = (rows.len() / 6) as u32;
        rows.extend_from_slice(pts.data());
        segments.push((start, pts.rows() as u32));
        windows.extend_from_slice(&window_row(&sensed, sensing));
        let f = &seq.hand.frames[t];
        let rel = joints_to_relative(&seq.gt_joints[t], &f.rotation, &f.translation);
        for j in &rel {
            gt.extend_from_slice(&[j.x, j.y, j.z]);
        }
    }
    let n = rows.len() / 6;
    InitBatch {
        point_rows: Tensor::from_vec(&[n, 6], rows).expect("row count matches data"),
        segments,
        window_rows: Tensor::from_vec(&[t_count, sensing.window_dim()], windows)
            .expect("row count matches data"),
        gt_rows: Tensor::from_vec(&[t_count, INIT_OUT_DIM], gt).expect("row count matches data"),
    }
}

/// Runs the initialization net over every frame of a sequence, returning the
/// predicted global joints and the world-frame crop clouds (reused by the
/// displacement sensors).
pub fn predict_init_sequence(
    nets: &Nets,
    store: &ParamStore,
    object: &TriMesh,
    object_traj: &ObjectTrajectory,
    hand: &HandTrajectory,
    seed: u64,
) -> Result<(Vec<JointSet>, Vec<PointCloud>), NnError> {
    let mut joints = Vec::with_capacity(hand.frames.len());
    let mut clouds = Vec::with_capacity(hand.frames.len());
    for t in 0..hand.frames.len() {
        let f = &object_traj.frames[t];
        let posed = object.transformed(&f.rotation, &f.translation);
        let sensed = sense_frame(&posed, hand, t, &nets.sensing, split_seed(seed, t as u64));
        let rel = nets.init.predict(store, &nets.sensing, &sensed)?;
        let hf = &hand.frames[t];
        joints.push(joints_to_global(&rel, &hf.rotation, &hf.translation));
        clouds.push(sensed.cloud_world);
    }
    Ok((joints, clouds))
}

/// Full learned pipeline for one sequence: initialization, then (unless
/// disabled) joint-local sensing and displacement refinement.
pub fn predict_refined_sequence(
    nets: &Nets,
    store: &ParamStore,
    skeleton: &Skeleton,
    object: &TriMesh,
    object_traj: &ObjectTrajectory,
    hand: &HandTrajectory,
    seed: u64,
    with_displacement: bool,
) -> Result<Vec<JointSet>, NnError> {
    let (init_joints, clouds) =
        predict_init_sequence(nets, store, object, object_traj, hand, seed)?;
    if !with_displacement {
        return Ok(init_joints);
    }
    let inputs = disp_inputs(
        skeleton,
        hand,
        &clouds,
        &init_joints,
        &nets.sensing,
        split_seed(seed, u64::MAX),
    );
    nets.disp.predict(store, skeleton, &nets.sensing, &inputs)
}

fn gt_rows_global(seq: &TrainSequence) -> Tensor {
    let mut data = Vec::with_capacity(seq.frames() * JOINT_COUNT * 3);
    for frame in &seq.gt_joints {
        for j in frame {
            data.extend_from_slice(&[j.x, j.y, j.z]);
        }
    }
    Tensor::from_vec(&[seq.frames() * JOINT_COUNT, 3], data).expect("row count matches data")
}

/// Two-stage training. `store` is either freshly registered here (when it
/// holds no parameters) or resumed as-is; `completed` gives the number of
/// epochs already finished per stage so a resumed run continues exactly
/// where the previous one stopped. Because stage 2 only ever starts after
/// stage 1 finishes, a valid resume point has either no stage-2 progress or
/// a complete stage 1. Sensing seeds derive from `seed` alone, so the same
/// call is bitwise-reproducible.
#[allow(clippy::too_many_arguments)]
pub fn train(
    nets: &Nets,
    cfg: &TrainConfig,
    skeleton: &Skeleton,
    dataset: &[TrainSequence],
    store: &mut ParamStore,
    seed: u64,
    completed: (usize, usize),
    mut on_epoch: impl FnMut(&LogEntry, &ParamStore),
) -> Result<Vec<LogEntry>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let sequential = completed.0 <= cfg.stage1_epochs
        && completed.1 <= cfg.stage2_epochs
        && (completed.1 == 0 || completed.0 == cfg.stage1_epochs);
    if !sequential {
        return Err(TrainError::InvalidResume { stage1: completed.0, stage2: completed.1 });
    }
    if store.is_empty() {
        nets.register(store, seed);
    }
    let mut log = Vec::new();

    if completed.0 < cfg.stage1_epochs {
        let batches: Vec<InitBatch> = dataset
            .iter()
            .enumerate()
            .map(|(i, seq)| sense_init_batch(seq, &nets.sensing, split_seed(seed, 1000 + i as u64)))
            .collect();
        for epoch in completed.0..cfg.stage1_epochs {
            let mut total = 0.0;
            for batch in &batches {
                let mut g = Graph::new();
                let out = nets.init.build(
                    &mut g,
                    store,
                    batch.point_rows.clone(),
                    &batch.segments,
                    batch.window_rows.clone(),
                )?;
                let gt = g.input(batch.gt_rows.clone())?;
                let loss = joint_loss(&mut g, out, gt)?;
                total += g.value(loss).item();
                let grads = g.backward(loss)?;
                store.adam_step(&g.param_grads(&grads), cfg.lr_init)?;
            }
            let entry =
                LogEntry { stage: 1, epoch, loss: total / batches.len() as f64 };
            on_epoch(&entry, store);
            log.push(entry);
        }
    }

    if completed.1 < cfg.stage2_epochs {
        // The init net no longer changes: sense the displacement inputs once.
        let mut disp_batches: Vec<(DispInputs, Tensor)> = Vec::with_capacity(dataset.len());
        for (i, seq) in dataset.iter().enumerate() {
            let (init_joints, clouds) = predict_init_sequence(
                nets,
                store,
                &seq.object,
                &seq.object_traj,
                &seq.hand,
                split_seed(seed, 1000 + i as u64),
            )?;
            let inputs = disp_inputs(
                skeleton,
                &seq.hand,
                &clouds,
                &init_joints,
                &nets.sensing,
                split_seed(seed, 2000 + i as u64),
            );
            disp_batches.push((inputs, gt_rows_global(seq)));
        }
        for epoch in completed.1..cfg.stage2_epochs {
            let mut total = 0.0;
            for (inputs, gt_rows) in &disp_batches {
                let mut g = Graph::new();
                let fwd = nets.disp.build(&mut g, store, skeleton, &nets.sensing, inputs)?;
                let init = g.input(inputs.init_rows.clone())?;
                let pred = g.add(init, fwd.displacement)?;
                let gt = g.input(gt_rows.clone())?;
                let loss = joint_loss(&mut g, pred, gt)?;
                total += g.value(loss).item();
                let grads = g.backward(loss)?;
                store.adam_step(&g.param_grads(&grads), cfg.lr_disp)?;
            }
            let entry =
                LogEntry { stage: 2, epoch, loss: total / disp_batches.len() as f64 };
            on_epoch(&entry, store);
            log.push(entry);
        }
    }

    Ok(log)
}
