//! Rigid motion tracks for the object and the wrist.

use super::GeomError;
use crate::math::{orthonormality_error, reorthonormalize, Mat3, Vec3};

/// One frame of rigid motion: rotation then translation.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidMotion {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

/// Checks every frame's rotation: drift below 1e-9 is kept verbatim (so
/// write/read round trips stay bit-identical), drift below 1e-4 is
/// re-orthonormalized, anything worse is rejected.
pub fn sanitize_rotations(frames: &mut [RigidMotion]) -> Result<(), GeomError> {
    for (i, f) in frames.iter_mut().enumerate() {
        let err = orthonormality_error(&f.rotation);
        if err > 1e-4 {
            return Err(GeomError::BadRotation { frame: i, error: err });
        }
        if err > 1e-9 {
            f.rotation = reorthonormalize(&f.rotation);
        }
    }
    Ok(())
}

/// Object pose track: template mesh coordinates -> world, per frame.
#[derive(Clone, Debug)]
pub struct ObjectTrajectory {
    pub frames: Vec<RigidMotion>,
    pub fps: f64,
}

/// Wrist track: translation is the wrist position, rotation the hand's
/// global orientation.
#[derive(Clone, Debug)]
pub struct HandTrajectory {
    pub frames: Vec<RigidMotion>,
    pub fps: f64,
}

impl HandTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Both trajectories must cover the same frames.
    pub fn check_paired(&self, object: &ObjectTrajectory) -> Result<(), GeomError> {
        if self.frames.len() != object.frames.len() {
            return Err(GeomError::FrameMismatch {
                hand: self.frames.len(),
                object: object.frames.len(),
            });
        }
        Ok(())
    }
}
