use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fit::FitConfig;
use crate::metrics::{CONTACT_TOL_M, IV_VOXEL_M};
use crate::net::{Nets, TrainConfig};
use crate::synth::SequenceConfig;

use super::PipelineError;

/// Evaluation resolution knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Voxel edge for intersection-volume integration, meters.
    pub iv_voxel: f64,
    /// Vertex-to-vertex distance that counts as contact, meters.
    pub contact_tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iv_voxel: IV_VOXEL_M, contact_tol: CONTACT_TOL_M }
    }
}

/// Every knob a pipeline run depends on, bundled so one file (and one hash)
/// pins synthesis, training, inference and evaluation behavior. Fields left
/// out of a config file keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub nets: Nets,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub synth: SequenceConfig,
    pub eval: EvalConfig,
    /// Master seed; commands derive their streams from it.
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON encoding, stamped into every output
    /// so mixed-config artifacts are detectable.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        fn positive(name: &str, v: f64) -> Result<(), PipelineError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{name} must be positive, got {v}")))
            }
        }
        fn nonzero(name: &str, v: usize) -> Result<(), PipelineError> {
            if v > 0 {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{name} must be nonzero")))
            }
        }

        let s = &self.nets.sensing;
        positive("nets.sensing.cube_side", s.cube_side)?;
        positive("nets.sensing.window_seconds", s.window_seconds)?;
        positive("nets.sensing.point_scale", s.point_scale)?;
        nonzero("nets.sensing.crop_samples", s.crop_samples)?;
        nonzero("nets.sensing.max_joint_points", s.max_joint_points)?;
        if !s.sensor_radius.is_finite() || s.sensor_radius < 0.0 {
            return Err(PipelineError::Config(format!(
                "nets.sensing.sensor_radius must be non-negative, got {}",
                s.sensor_radius
            )));
        }
        if s.sensor_radius >= s.cube_side {
            return Err(PipelineError::Config(format!(
                "sensor radius {} must stay below the crop cube side {}",
                s.sensor_radius, s.cube_side
            )));
        }

        for (i, &w) in self.nets.init.pointnet_widths.iter().enumerate() {
            nonzero(&format!("nets.init.pointnet_widths[{i}]"), w)?;
        }
        for (i, &w) in self.nets.init.mlp_hidden.iter().enumerate() {
            nonzero(&format!("nets.init.mlp_hidden[{i}]"), w)?;
        }
        let d = &self.nets.disp;
        for (i, &w) in d.feat_widths.iter().enumerate() {
            nonzero(&format!("nets.disp.feat_widths[{i}]"), w)?;
        }
        for (i, &w) in d.embed_widths.iter().enumerate() {
            nonzero(&format!("nets.disp.embed_widths[{i}]"), w)?;
        }
        nonzero("nets.disp.attn_dim", d.attn_dim)?;
        nonzero("nets.disp.max_frames", d.max_frames)?;

        positive("train.lr_init", self.train.lr_init)?;
        positive("train.lr_disp", self.train.lr_disp)?;

        positive("fit.lr", self.fit.lr)?;
        nonzero("fit.iters", self.fit.iters)?;
        for (name, w) in [
            ("fit.w_shape", self.fit.w_shape),
            ("fit.w_pose", self.fit.w_pose),
            ("fit.w_smooth", self.fit.w_smooth),
            ("fit.w_accel", self.fit.w_accel),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(PipelineError::Config(format!(
                    "{name} must be non-negative, got {w}"
                )));
            }
        }

        if self.synth.frames < 2 {
            return Err(PipelineError::Config(
                "synth.frames must be at least 2".to_string(),
            ));
        }
        positive("synth.fps", self.synth.fps)?;
        positive("synth.iv_voxel", self.synth.iv_voxel)?;
        positive("synth.iv_filter_cm3", self.synth.iv_filter_cm3)?;
        nonzero("synth.grasp.max_attempts", self.synth.grasp.max_attempts)?;

        positive("eval.iv_voxel", self.eval.iv_voxel)?;
        positive("eval.contact_tol", self.eval.contact_tol)?;
        Ok(())
    }
}
