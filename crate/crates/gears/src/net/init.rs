//! Joint initialization network: a point-cloud encoder pooled over the crop
//! cloud, concatenated with the flattened trajectory window and pushed
//! through a fully-connected head that regresses all 21 wrist-relative
//! joint positions at once.

use serde::{Deserialize, Serialize};

use super::features::{init_point_rows, window_row, FrameSensing, SensingConfig};
use crate::hand::{JointSet, JOINT_COUNT};
use crate::math::{Mat3, Vec3};
use crate::nn::{Graph, NnError, NodeId, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitNetConfig {
    /// Per-point encoder widths (applied to 6-dim point+normal rows).
    pub pointnet_widths: [usize; 3],
    /// Hidden widths of the head; the output layer is fixed at 21*3.
    pub mlp_hidden: [usize; 2],
}

impl Default for InitNetConfig {
    fn default() -> Self {
        Self { pointnet_widths: [64, 128, 256], mlp_hidden: [256, 128] }
    }
}

pub const INIT_OUT_DIM: usize = JOINT_COUNT * 3;

impl InitNetConfig {
    /// Registers all parameters (idempotent values for a fixed seed: names
    /// seed their own streams, so registration order is irrelevant).
    pub fn register(&self, sensing: &SensingConfig, store: &mut ParamStore, seed: u64) {
        let mut fan_in = 6;
        for (i, &w) in self.pointnet_widths.iter().enumerate() {
            store.init_weight(&format!("init.pn{i}.w"), fan_in, w, seed);
            store.init_zeros(&format!("init.pn{i}.b"), &[1, w]);
            fan_in = w;
        }
        let mut width = self.pointnet_widths[2] + sensing.window_dim();
        for (i, &w) in self.mlp_hidden.iter().enumerate() {
            store.init_weight(&format!("init.mlp{i}.w"), width, w, seed);
            store.init_zeros(&format!("init.mlp{i}.b"), &[1, w]);
            width = w;
        }
        store.init_weight("init.out.w", width, INIT_OUT_DIM, seed);
        store.init_zeros("init.out.b", &[1, INIT_OUT_DIM]);
    }

    /// Builds the forward graph for a batch of frames. `point_rows` stacks
    /// every frame's crop rows; `segments` assigns a row range to each frame;
    /// `window_rows` is [B, window_dim]. Returns the [B, 63] output node.
    pub fn build(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        point_rows: Tensor,
        segments: &[(u32, u32)],
        window_rows: Tensor,
    ) -> Result<NodeId, NnError> {
        let mut h = g.input(point_rows)?;
        for i in 0..self.pointnet_widths.len() {
            let w = g.param(&format!("init.pn{i}.w"), store.get(&format!("init.pn{i}.w"))?.clone())?;
            let b = g.param(&format!("init.pn{i}.b"), store.get(&format!("init.pn{i}.b"))?.clone())?;
            h = g.linear(h, w, b)?;
            h = g.relu(h)?;
        }
        let pooled = g.max_pool_segments(h, segments)?;
        let win = g.input(window_rows)?;
        let mut x = g.concat_cols(pooled, win)?;
        for i in 0..self.mlp_hidden.len() {
            let w = g.param(&format!("init.mlp{i}.w"), store.get(&format!("init.mlp{i}.w"))?.clone())?;
            let b = g.param(&format!("init.mlp{i}.b"), store.get(&format!("init.mlp{i}.b"))?.clone())?;
            x = g.linear(x, w, b)?;
            x = g.relu(x)?;
        }
        let w = g.param("init.out.w", store.get("init.out.w")?.clone())?;
        let b = g.param("init.out.b", store.get("init.out.b")?.clone())?;
        g.linear(x, w, b)
    }

    /// Wrist-relative joints for one sensed frame.
    pub fn predict(
        &self,
        store: &ParamStore,
        sensing_cfg: &SensingConfig,
        sensing: &FrameSensing,
    ) -> Result<JointSet, NnError> {
        let rows = init_point_rows(sensing, sensing_cfg);
        let n = rows.rows() as u32;
        let window = Tensor::from_vec(
            &[1, sensing_cfg.window_dim()],
            window_row(sensing, sensing_cfg),
        )?;
        let mut g = Graph::new();
        let out = self.build(&mut g, store, rows, &[(0, n)], window)?;
        Ok(rows_to_joints(g.value(out).data()))
    }
}

/// Reinterprets one 63-float row as 21 joint positions.
pub fn rows_to_joints(row: &[f64]) -> JointSet {
    let mut joints = [Vec3::zeros(); JOINT_COUNT];
    for (k, j) in joints.iter_mut().enumerate() {
        *j = Vec3::new(row[3 * k], row[3 * k + 1], row[3 * k + 2]);
    }
    joints
}

/// Wrist-relative joints to the global frame: `j = R_H j_rel + w`.
pub fn joints_to_global(rel: &JointSet, rot: &Mat3, wrist: &Vec3) -> JointSet {
    let mut out = [Vec3::zeros(); JOINT_COUNT];
    for (o, r) in out.iter_mut().zip(rel) {
        *o = rot * r + wrist;
    }
    out
}

/// Global joints to the wrist-relative frame (the init net's target space).
pub fn joints_to_relative(global: &JointSet, rot: &Mat3, wrist: &Vec3) -> JointSet {
    let rt = rot.transpose();
    let mut out = [Vec3::zeros(); JOINT_COUNT];
    for (o, j) in out.iter_mut().zip(global) {
        *o = rt * (j - wrist);
    }
    out
}
