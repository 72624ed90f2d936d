//! Desk-scale hand-object interaction toolkit.
//!
//! Given a wrist trajectory, an object trajectory and the object's template
//! mesh, the library predicts the full 21-joint hand motion: a coarse
//! per-frame initialization from a canonicalized crop of the object surface,
//! a refinement stage that senses object geometry locally around each joint
//! and regresses per-joint displacements with interleaved spatio-temporal
//! attention, and an optimization-based fit of a parametric capsule hand to
//! the predicted joints. Synthetic grasp sequences, interaction metrics and a
//! small deterministic tensor/autodiff substrate make the whole pipeline
//! trainable and verifiable on procedurally generated data alone.
//!
//! Everything is `f64`, single-threaded and seed-deterministic: identical
//! seeds and inputs produce bitwise-identical corpora, training trajectories
//! and predictions.

pub mod fit;
pub mod geom;
pub mod hand;
pub mod math;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod pipeline;
pub mod synth;

pub use math::{Mat3, Vec3};
