//! Optimization-based hand fitting: recovers shared shape coefficients and
//! per-frame joint rotations from a predicted joint sequence by gradient
//! descent through forward kinematics. The wrist position and global
//! orientation are inputs (taken from the tracked trajectory), never free
//! variables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::HandTrajectory;
use crate::hand::{
    fk_with_frames, forward_kinematics, HandPose, HandShape, JointSet, Skeleton, ARTICULATED,
    JOINT_COUNT, SHAPE_COEFFS,
};
use crate::math::{rodrigues_jacobian, Mat3, Vec3};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Upper bound kept strictly below pi so fitted poses always validate.
const THETA_MAX: f64 = std::f64::consts::PI - 1e-6;
/// Pose coordinates per frame: an axis-angle vector per articulated joint.
const THETA_DIM: usize = 3 * ARTICULATED.len();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Weight on ‖β‖².
    pub w_shape: f64,
    /// Weight on Σ‖θᵗ‖².
    pub w_pose: f64,
    /// Weight on Σ‖θᵗ⁺¹ − θᵗ‖².
    pub w_smooth: f64,
    /// Weight on ΣΣ‖j̈‖ (joint acceleration magnitudes, not squared).
    pub w_accel: f64,
    pub iters: usize,
    pub lr: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { w_shape: 1e-3, w_pose: 1e-4, w_smooth: 1e-2, w_accel: 1e-3, iters: 400, lr: 0.05 }
    }
}

/// Raw (unweighted) values of the five objective terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    /// Σ over frames and joints of squared distance to the target, m².
    pub data: f64,
    /// ‖β‖².
    pub shape: f64,
    /// Σ‖θᵗ‖².
    pub pose: f64,
    /// Σ‖θᵗ⁺¹ − θᵗ‖².
    pub smooth: f64,
    /// Σ over interior frames and joints of ‖j̈‖ with central differences
    /// scaled by fps²; zero unless at least three frames exist.
    pub accel: f64,
}

impl LossTerms {
    pub fn total(&self, cfg: &FitConfig) -> f64 {
        self.data
            + cfg.w_shape * self.shape
            + cfg.w_pose * self.pose
            + cfg.w_smooth * self.smooth
            + cfg.w_accel * self.accel
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("cannot fit an empty joint sequence")]
    TooShort,
    #[error("loss became non-finite at iteration {iter}; lower the learning rate")]
    NonFiniteLoss { iter: usize },
}

/// Fitted parameters plus the per-iteration loss trace. `loss` is the best
/// value encountered and `shape`/`poses` the parameters that achieved it.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub shape: HandShape,
    pub poses: Vec<HandPose>,
    pub loss: f64,
    pub trace: Vec<f64>,
}

/// Evaluates the raw objective terms for explicit parameters. The
/// acceleration term differentiates the model joints (the quantities being
/// optimized), not the targets.
pub fn loss_terms(
    skeleton: &Skeleton,
    shape: &HandShape,
    poses: &[HandPose],
    targets: &[JointSet],
    fps: f64,
) -> LossTerms {
    assert_eq!(poses.len(), targets.len(), "one pose per target frame");
    let t_count = poses.len();
    let joints: Vec<JointSet> =
        poses.iter().map(|p| forward_kinematics(skeleton, shape, p)).collect();
    let mut terms = LossTerms::default();
    for t in 0..t_count {
        for k in 0..JOINT_COUNT {
            terms.data += (joints[t][k] - targets[t][k]).norm_squared();
        }
        for th in &poses[t].theta {
            terms.pose += th.norm_squared();
        }
    }
    terms.shape = shape.beta.iter().map(|b| b * b).sum();
    for t in 0..t_count.saturating_sub(1) {
        for i in 0..ARTICULATED.len() {
            terms.smooth += (poses[t + 1].theta[i] - poses[t].theta[i]).norm_squared();
        }
    }
    let fps2 = fps * fps;
    for t in 1..t_count.saturating_sub(1) {
        for k in 0..JOINT_COUNT {
            let a = (joints[t + 1][k] - joints[t][k] * 2.0 + joints[t - 1][k]) * fps2;
            terms.accel += a.norm();
        }
    }
    terms
}

struct Problem<'a> {
    skeleton: &'a Skeleton,
    targets: &'a [JointSet],
    anchors: Vec<(Mat3, Vec3)>,
    fps: f64,
}

impl Problem<'_> {
    fn t_count(&self) -> usize {
        self.targets.len()
    }

    fn dim(&self) -> usize {
        SHAPE_COEFFS + THETA_DIM * self.t_count()
    }

    fn decode(&self, p: &[f64]) -> (HandShape, Vec<HandPose>) {
        let mut shape = HandShape::default();
        shape.beta.copy_from_slice(&p[..SHAPE_COEFFS]);
        let poses = (0..self.t_count())
            .map(|t| {
                let base = SHAPE_COEFFS + t * THETA_DIM;
                let (rot, pos) = self.anchors[t];
                let mut pose = HandPose::rest(rot, pos);
                for i in 0..ARTICULATED.len() {
                    pose.theta[i] =
                        Vec3::new(p[base + 3 * i], p[base + 3 * i + 1], p[base + 3 * i + 2]);
                }
                pose
            })
            .collect();
        (shape, poses)
    }

    /// Weighted objective and its gradient. Position-dependent terms (data,
    /// acceleration) backpropagate through the kinematic chain analytically;
    /// the θ/β regularizers differentiate directly.
    fn eval(&self, p: &[f64], cfg: &FitConfig) -> (LossTerms, Vec<f64>) {
        let t_count = self.t_count();
        let (shape, poses) = self.decode(p);
        let fk: Vec<_> =
            poses.iter().map(|pose| fk_with_frames(self.skeleton, &shape, pose)).collect();

        let mut terms = LossTerms::default();
        terms.shape = shape.beta.iter().map(|b| b * b).sum();
        // d(total)/d(joint position), per frame and joint.
        let mut g_pos = vec![[Vec3::zeros(); JOINT_COUNT]; t_count];
        for t in 0..t_count {
            for k in 0..JOINT_COUNT {
                let d = fk[t].0[k] - self.targets[t][k];
                terms.data += d.norm_squared();
                g_pos[t][k] += d * 2.0;
            }
            for th in &poses[t].theta {
                terms.pose += th.norm_squared();
            }
        }
        let fps2 = self.fps * self.fps;
        for t in 1..t_count.saturating_sub(1) {
            for k in 0..JOINT_COUNT {
                let a = (fk[t + 1].0[k] - fk[t].0[k] * 2.0 + fk[t - 1].0[k]) * fps2;
                let n = a.norm();
                terms.accel += n;
                if n > 0.0 {
                    let u = a * (cfg.w_accel * fps2 / n);
                    g_pos[t + 1][k] += u;
                    g_pos[t - 1][k] += u;
                    g_pos[t][k] -= u * 2.0;
                }
            }
        }

        let mut art_index = [usize::MAX; JOINT_COUNT];
        for (i, &k) in ARTICULATED.iter().enumerate() {
            art_index[k] = i;
        }

        let mut grad = vec![0.0; self.dim()];
        for (g, b) in grad[..SHAPE_COEFFS].iter_mut().zip(&shape.beta) {
            *g = 2.0 * cfg.w_shape * b;
        }
        for t in 0..t_count {
            let frames = &fk[t].1;
            let base = SHAPE_COEFFS + t * THETA_DIM;
            let mut g_p = g_pos[t];
            let mut g_rot = [Mat3::zeros(); JOINT_COUNT];
            // Children carry larger indices, so a descending sweep sees each
            // joint's full adjoint before folding it into the parent.
            for k in (1..JOINT_COUNT).rev() {
                let par = self.skeleton.parent[k] as usize;
                let gk = g_p[k];
                g_p[par] += gk;
                let bone = self.skeleton.scaled_rest_bone(&shape, k);
                g_rot[par] += gk * bone.transpose();
                let local_grad_b = frames.rotation[par].transpose() * gk;
                let ds = shape.bone_scale_gradient(self.skeleton, k - 1);
                if ds != 0.0 {
                    let rest =
                        self.skeleton.rest_joints[k] - self.skeleton.rest_joints[par];
                    let group = self.skeleton.shape_groups[k - 1];
                    grad[group] += local_grad_b.dot(&rest) * ds;
                }
                g_rot[par] += g_rot[k] * frames.relative[k].transpose();
                let i = art_index[k];
                if i != usize::MAX {
                    let g_local = frames.rotation[par].transpose() * g_rot[k];
                    let jac = rodrigues_jacobian(&poses[t].theta[i]);
                    for (j, dj) in jac.iter().enumerate() {
                        grad[base + 3 * i + j] += g_local.dot(dj);
                    }
                }
            }
            for i in 0..ARTICULATED.len() {
                let th = poses[t].theta[i];
                for j in 0..3 {
                    grad[base + 3 * i + j] += 2.0 * cfg.w_pose * th[j];
                }
            }
        }
        for t in 0..t_count.saturating_sub(1) {
            let (lo, hi) = (SHAPE_COEFFS + t * THETA_DIM, SHAPE_COEFFS + (t + 1) * THETA_DIM);
            for i in 0..ARTICULATED.len() {
                let d = poses[t + 1].theta[i] - poses[t].theta[i];
                terms.smooth += d.norm_squared();
                for j in 0..3 {
                    grad[hi + 3 * i + j] += 2.0 * cfg.w_smooth * d[j];
                    grad[lo + 3 * i + j] -= 2.0 * cfg.w_smooth * d[j];
                }
            }
        }
        (terms, grad)
    }
}

/// Keeps every axis-angle block strictly inside the valid rotation domain.
fn clamp_theta(p: &mut [f64], t_count: usize) {
    for t in 0..t_count {
        let base = SHAPE_COEFFS + t * THETA_DIM;
        for i in 0..ARTICULATED.len() {
            let th = &mut p[base + 3 * i..base + 3 * i + 3];
            let n = (th[0] * th[0] + th[1] * th[1] + th[2] * th[2]).sqrt();
            if n > THETA_MAX {
                let s = THETA_MAX / n;
                th[0] *= s;
                th[1] *= s;
                th[2] *= s;
            }
        }
    }
}

/// Fits shared shape coefficients and per-frame joint rotations to a target
/// joint sequence. Global rotation and wrist position per frame come from
/// `traj` and stay fixed. Optimization is adaptive-moment gradient descent;
/// the step size halves whenever the loss increases, and the best parameters
/// seen are returned. `warm` seeds the solver from a previous fit (frames
/// beyond the warm result start at rest).
pub fn fit_sequence(
    skeleton: &Skeleton,
    targets: &[JointSet],
    traj: &HandTrajectory,
    cfg: &FitConfig,
    warm: Option<&FitResult>,
) -> Result<FitResult, FitError> {
    if targets.is_empty() {
        return Err(FitError::TooShort);
    }
    assert_eq!(traj.frames.len(), targets.len(), "trajectory must cover every target frame");
    let anchors = traj.frames.iter().map(|f| (f.rotation, f.translation)).collect();
    let problem = Problem { skeleton, targets, anchors, fps: traj.fps };
    let t_count = problem.t_count();

    let mut p = vec![0.0; problem.dim()];
    if let Some(w) = warm {
        p[..SHAPE_COEFFS].copy_from_slice(&w.shape.beta);
        for (t, pose) in w.poses.iter().take(t_count).enumerate() {
            let base = SHAPE_COEFFS + t * THETA_DIM;
            for (i, th) in pose.theta.iter().enumerate() {
                p[base + 3 * i..base + 3 * i + 3].copy_from_slice(&[th.x, th.y, th.z]);
            }
        }
    }
    clamp_theta(&mut p, t_count);

    let (terms, mut grad) = problem.eval(&p, cfg);
    let mut loss = terms.total(cfg);
    if !loss.is_finite() {
        return Err(FitError::NonFiniteLoss { iter: 0 });
    }
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    trace.push(loss);
    let mut best = (loss, p.clone());

    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    let mut lr = cfg.lr;
    for iter in 0..cfg.iters {
        let c1 = 1.0 - BETA1.powi(iter as i32 + 1);
        let c2 = 1.0 - BETA2.powi(iter as i32 + 1);
        for i in 0..p.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
        }
        clamp_theta(&mut p, t_count);
        let (terms_new, grad_new) = problem.eval(&p, cfg);
        let loss_new = terms_new.total(cfg);
        if !loss_new.is_finite() {
            return Err(FitError::NonFiniteLoss { iter: iter + 1 });
        }
        if loss_new > loss {
            lr *= 0.5;
        }
        loss = loss_new;
        grad = grad_new;
        trace.push(loss);
        if loss < best.0 {
            best = (loss, p.clone());
        }
    }

    let (shape, poses) = problem.decode(&best.1);
    Ok(FitResult { shape, poses, loss: best.0, trace })
}
