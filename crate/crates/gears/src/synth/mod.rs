//! Synthetic data: primitive objects, procedural grasps, and interpolated
//! approach sequences, all reproducible from a single seed.

pub mod grasp;
pub mod primitives;
pub mod sequence;

pub use grasp::{synthesize_grasp, Grasp, GraspConfig, PALM_NORMAL_LOCAL};
pub use primitives::{
    box_mesh, capsule, cylinder, icosphere, signed_volume, ObjectSpec, TARGET_EDGE_M,
};
pub use sequence::{
    generate_corpus, generate_sequence, generate_sequence_with_stats, SequenceConfig,
    SyntheticSequence, SynthStats,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no acceptable grasp found after {attempts} attempts")]
    GraspNotFound { attempts: usize },
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error(transparent)]
    Hand(#[from] crate::hand::HandError),
}
