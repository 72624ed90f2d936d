//! The two learned stages: per-frame joint initialization from the wrist
//! crop, and sequence-level joint displacement refinement with interleaved
//! spatial/temporal attention, plus the sensing front end and the two-stage
//! trainer they share.

mod disp;
mod features;
mod init;
mod train;

pub use disp::{DispForward, DispNetConfig};
pub use features::{
    disp_inputs, init_point_rows, sense_frame, window_row, DispInputs, FrameSensing,
    SensingConfig,
};
pub use init::{
    joints_to_global, joints_to_relative, rows_to_joints, InitNetConfig, INIT_OUT_DIM,
};
pub use train::{
    joint_loss, predict_init_sequence, predict_refined_sequence, train, LogEntry, Nets,
    TrainConfig, TrainError, TrainSequence,
};
