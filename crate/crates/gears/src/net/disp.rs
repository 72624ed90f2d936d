//! Joint displacement network: a shared point encoder over each joint's
//! local surface sample, per-joint embeddings, interleaved spatial and
//! temporal self-attention over the (frame, joint) feature grid, and a
//! linear head whose template-frame displacements are rotated back to the
//! global frame.

use serde::{Deserialize, Serialize};

use super::features::{DispInputs, SensingConfig};
use crate::hand::{JointSet, Skeleton, JOINT_COUNT};
use crate::math::Vec3;
use crate::nn::{Graph, NnError, NodeId, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DispNetConfig {
    /// Shared per-point encoder widths (6-dim point+normal rows).
    pub feat_widths: [usize; 3],
    /// Per-joint embedding widths (3-dim rest-coordinate input).
    pub embed_widths: [usize; 2],
    /// Query/key width of every attention block.
    pub attn_dim: usize,
    /// Number of spatial/temporal attention pairs (blocks alternate S, T).
    pub attn_pairs: usize,
    /// Longest supported sequence for the temporal position table.
    pub max_frames: usize,
}

impl Default for DispNetConfig {
    fn default() -> Self {
        Self {
            feat_widths: [32, 64, 64],
            embed_widths: [64, 64],
            attn_dim: 128,
            attn_pairs: 2,
            max_frames: 60,
        }
    }
}

/// Forward-pass handles: the global-frame displacement rows plus the pooled
/// per-joint point features (before embedding concat), exposed for tests.
pub struct DispForward {
    pub displacement: NodeId,
    pub point_features: NodeId,
}

impl DispNetConfig {
    /// Feature width after concatenating point features and embeddings.
    pub fn d_model(&self) -> usize {
        self.feat_widths[2] + self.embed_widths[1]
    }

    pub fn register(&self, store: &mut ParamStore, seed: u64) {
        let mut fan_in = 6;
        for (i, &w) in self.feat_widths.iter().enumerate() {
            store.init_weight(&format!("disp.feat{i}.w"), fan_in, w, seed);
            store.init_zeros(&format!("disp.feat{i}.b"), &[1, w]);
            fan_in = w;
        }
        fan_in = 3;
        for (i, &w) in self.embed_widths.iter().enumerate() {
            store.init_weight(&format!("disp.embed{i}.w"), fan_in, w, seed);
            store.init_zeros(&format!("disp.embed{i}.b"), &[1, w]);
            fan_in = w;
        }
        let d = self.d_model();
        for blk in 0..2 * self.attn_pairs {
            store.init_weight(&format!("disp.attn{blk}.wq"), d, self.attn_dim, seed);
            store.init_weight(&format!("disp.attn{blk}.wk"), d, self.attn_dim, seed);
            store.init_weight(&format!("disp.attn{blk}.wv"), d, d, seed);
        }
        // Learned temporal offsets start at zero.
        store.init_zeros("disp.pos", &[self.max_frames, d]);
        store.init_weight("disp.head.w", d, 3, seed);
        store.init_zeros("disp.head.b", &[1, 3]);
    }

    /// Builds the forward graph over one sequence. Rows are frame-major
    /// (t*21 + k); the returned displacement node is [T*21, 3] in the global
    /// frame.
    pub fn build(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        skeleton: &Skeleton,
        sensing: &SensingConfig,
        inputs: &DispInputs,
    ) -> Result<DispForward, NnError> {
        let t_count = inputs.frames();
        let rows = t_count * JOINT_COUNT;

        let mut h = g.input(inputs.point_rows.clone())?;
        for i in 0..self.feat_widths.len() {
            let w = g.param(&format!("disp.feat{i}.w"), store.get(&format!("disp.feat{i}.w"))?.clone())?;
            let b = g.param(&format!("disp.feat{i}.b"), store.get(&format!("disp.feat{i}.b"))?.clone())?;
            h = g.linear(h, w, b)?;
            h = g.relu(h)?;
        }
        let pooled = g.max_pool_segments(h, &inputs.segments)?;

        let mut embed_data = Vec::with_capacity(JOINT_COUNT * 3);
        for k in 0..JOINT_COUNT {
            let r = skeleton.rest_joints[k] * sensing.point_scale;
            embed_data.extend_from_slice(&[r.x, r.y, r.z]);
        }
        let mut e = g.input(Tensor::from_vec(&[JOINT_COUNT, 3], embed_data)?)?;
        for i in 0..self.embed_widths.len() {
            let w = g.param(&format!("disp.embed{i}.w"), store.get(&format!("disp.embed{i}.w"))?.clone())?;
            let b = g.param(&format!("disp.embed{i}.b"), store.get(&format!("disp.embed{i}.b"))?.clone())?;
            e = g.linear(e, w, b)?;
            e = g.relu(e)?;
        }
        let tile: Vec<u32> = (0..rows).map(|r| (r % JOINT_COUNT) as u32).collect();
        let e_rows = g.permute_rows(e, &tile)?;

        let mut x = g.concat_cols(pooled, e_rows)?;

        let mut to_joint_major = vec![0u32; rows];
        let mut to_frame_major = vec![0u32; rows];
        let mut pos_gather = vec![0u32; rows];
        for k in 0..JOINT_COUNT {
            for t in 0..t_count {
                to_joint_major[k * t_count + t] = (t * JOINT_COUNT + k) as u32;
                to_frame_major[t * JOINT_COUNT + k] = (k * t_count + t) as u32;
                pos_gather[k * t_count + t] = t.min(self.max_frames - 1) as u32;
            }
        }

        for blk in 0..2 * self.attn_pairs {
            let wq = g.param(&format!("disp.attn{blk}.wq"), store.get(&format!("disp.attn{blk}.wq"))?.clone())?;
            let wk = g.param(&format!("disp.attn{blk}.wk"), store.get(&format!("disp.attn{blk}.wk"))?.clone())?;
            let wv = g.param(&format!("disp.attn{blk}.wv"), store.get(&format!("disp.attn{blk}.wv"))?.clone())?;
            if blk % 2 == 0 {
                x = g.segmented_attention(x, wq, wk, wv, JOINT_COUNT)?;
            } else {
                let mut xj = g.permute_rows(x, &to_joint_major)?;
                let pos = g.param("disp.pos", store.get("disp.pos")?.clone())?;
                let pos_rows = g.permute_rows(pos, &pos_gather)?;
                xj = g.add(xj, pos_rows)?;
                xj = g.segmented_attention(xj, wq, wk, wv, t_count)?;
                x = g.permute_rows(xj, &to_frame_major)?;
            }
        }

        let w = g.param("disp.head.w", store.get("disp.head.w")?.clone())?;
        let b = g.param("disp.head.b", store.get("disp.head.b")?.clone())?;
        let local = g.linear(x, w, b)?;
        let displacement = g.rotate_rows(local, &inputs.rotations)?;
        Ok(DispForward { displacement, point_features: pooled })
    }

    /// Refined global joints for one sequence: initialization plus predicted
    /// displacement.
    pub fn predict(
        &self,
        store: &ParamStore,
        skeleton: &Skeleton,
        sensing: &SensingConfig,
        inputs: &DispInputs,
    ) -> Result<Vec<JointSet>, NnError> {
        let mut g = Graph::new();
        let fwd = self.build(&mut g, store, skeleton, sensing, inputs)?;
        let d = g.value(fwd.displacement).data();
        let init = inputs.init_rows.data();
        let t_count = inputs.frames();
        let mut out = vec![[Vec3::zeros(); JOINT_COUNT]; t_count];
        for t in 0..t_count {
            for k in 0..JOINT_COUNT {
                let r = (t * JOINT_COUNT + k) * 3;
                out[t][k] = Vec3::new(init[r] + d[r], init[r + 1] + d[r + 1], init[r + 2] + d[r + 2]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{HandTrajectory, RigidMotion};
    use crate::math::{rodrigues, split_seed, Mat3};
    use crate::net::features::{disp_inputs, sense_frame};
    use crate::net::init::{joints_to_global, InitNetConfig};
    use crate::nn::{max_rel_err, numeric_gradient};
    use crate::synth::ObjectSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> DispNetConfig {
        DispNetConfig {
            feat_widths: [8, 8, 8],
            embed_widths: [8, 8],
            attn_dim: 8,
            attn_pairs: 2,
            max_frames: 8,
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        rodrigues(&Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ))
    }

    /// Random but structurally valid inputs: T frames, a few points per
    /// joint, random rotations, random init rows.
    fn random_inputs(rng: &mut ChaCha8Rng, t_count: usize, pts: usize) -> DispInputs {
        let rows = t_count * JOINT_COUNT;
        let mut point_rows = Vec::new();
        let mut segments = Vec::new();
        let mut rotations = Vec::new();
        for s in 0..rows {
            let n = if s % 7 == 3 { 0 } else { pts };
            let start = (point_rows.len() / 6) as u32;
            for _ in 0..n {
                for _ in 0..6 {
                    point_rows.push(rng.gen_range(-1.0..1.0));
                }
            }
            segments.push((start, n as u32));
            rotations.push(random_rotation(rng));
        }
        let init: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let n_rows = point_rows.len() / 6;
        DispInputs {
            point_rows: Tensor::from_vec(&[n_rows, 6], point_rows).unwrap(),
            segments,
            rotations,
            init_rows: Tensor::from_vec(&[rows, 3], init).unwrap(),
        }
    }

    #[test]
    fn zero_head_means_zero_displacement() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::new();
        cfg.register(&mut store, 3);
        store.insert("disp.head.w", Tensor::zeros(&[cfg.d_model(), 3]));
        store.insert("disp.head.b", Tensor::zeros(&[1, 3]));
        let skeleton = Skeleton::default_template();
        let sensing = SensingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = random_inputs(&mut rng, 3, 4);
        let refined = cfg.predict(&store, &skeleton, &sensing, &inputs).unwrap();
        for (t, frame) in refined.iter().enumerate() {
            for (k, j) in frame.iter().enumerate() {
                let r = (t * JOINT_COUNT + k) * 3;
                let init = &inputs.init_rows.data()[r..r + 3];
                assert_eq!((j.x, j.y, j.z), (init[0], init[1], init[2]));
            }
        }
    }

    #[test]
    fn swapping_two_joint_samples_swaps_their_point_features() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::new();
        cfg.register(&mut store, 5);
        let skeleton = Skeleton::default_template();
        let sensing = SensingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_inputs(&mut rng, 2, 5);

        // Swap the (frame 0, joint 4) and (frame 1, joint 9) segments.
        let mut b = a.clone();
        let (ra, rb) = (4, JOINT_COUNT + 9);
        b.segments.swap(ra, rb);

        let mut ga = Graph::new();
        let fa = cfg.build(&mut ga, &store, &skeleton, &sensing, &a).unwrap();
        let mut gb = Graph::new();
        let fb = cfg.build(&mut gb, &store, &skeleton, &sensing, &b).unwrap();
        let va = ga.value(fa.point_features);
        let vb = gb.value(fb.point_features);
        let w = va.cols();
        assert_eq!(va.data()[ra * w..(ra + 1) * w], vb.data()[rb * w..(rb + 1) * w]);
        assert_eq!(va.data()[rb * w..(rb + 1) * w], vb.data()[ra * w..(ra + 1) * w]);
        // An untouched row stays identical.
        assert_eq!(va.data()[..w], vb.data()[..w]);
    }

    #[test]
    fn attention_mixes_frames_only_through_temporal_blocks() {
        // With one attention pair and equal inputs in every frame, outputs
        // repeat across frames; perturbing one frame's init joints leaves
        // point features of other frames untouched (sensing is per frame)
        // but changes their refined outputs only via attention.
        let cfg = DispNetConfig { attn_pairs: 1, ..tiny_cfg() };
        let mut store = ParamStore::new();
        cfg.register(&mut store, 7);
        let skeleton = Skeleton::default_template();
        let sensing = SensingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = random_inputs(&mut rng, 1, 4);
        let t_count = 3;
        // Tile the single frame's data across three identical frames.
        let reps = |v: &[f64]| {
            let mut out = Vec::with_capacity(v.len() * t_count);
            for _ in 0..t_count {
                out.extend_from_slice(v);
            }
            out
        };
        let pts_per_frame = one.point_rows.rows() as u32;
        let mut segments = Vec::new();
        for t in 0..t_count as u32 {
            for &(s, l) in &one.segments {
                segments.push((s + t * pts_per_frame, l));
            }
        }
        let inputs = DispInputs {
            point_rows: Tensor::from_vec(
                &[one.point_rows.rows() * t_count, 6],
                reps(one.point_rows.data()),
            )
            .unwrap(),
            segments,
            rotations: std::iter::repeat(one.rotations.clone()).take(t_count).flatten().collect(),
            init_rows: Tensor::from_vec(&[JOINT_COUNT * t_count, 3], reps(one.init_rows.data()))
                .unwrap(),
        };
        let refined = cfg.predict(&store, &skeleton, &sensing, &inputs).unwrap();
        for t in 1..t_count {
            for k in 0..JOINT_COUNT {
                assert!(
                    (refined[t][k] - refined[0][k]).norm() < 1e-12,
                    "frame {t} joint {k} diverged on identical inputs"
                );
            }
        }
    }

    #[test]
    fn gradient_check_full_displacement_net() {
        let cfg = DispNetConfig { max_frames: 4, ..tiny_cfg() };
        let mut store = ParamStore::new();
        cfg.register(&mut store, 11);
        let skeleton = Skeleton::default_template();
        let sensing = SensingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Nudge every parameter off its initial value so no relu input sits
        // exactly on the kink (the wrist rest coordinate is the origin and
        // fresh biases are zero, which puts that row's pre-activation at 0
        // where central differences disagree with the one-sided derivative).
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in &names {
            let t = store.get(name).unwrap();
            let data: Vec<f64> =
                t.data().iter().map(|&x| x + rng.gen_range(-0.05..0.05)).collect();
            let shape = t.shape().to_vec();
            store.insert(name, Tensor::from_vec(&shape, data).unwrap());
        }
        let inputs = random_inputs(&mut rng, 2, 3);
        let rows = inputs.init_rows.rows();
        let gt: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let gt = Tensor::from_vec(&[rows, 3], gt).unwrap();

        let loss_of = |store: &ParamStore| -> f64 {
            let mut g = Graph::new();
            let fwd = cfg.build(&mut g, store, &skeleton, &sensing, &inputs).unwrap();
            let init = g.input(inputs.init_rows.clone()).unwrap();
            let pred = g.add(init, fwd.displacement).unwrap();
            let gt_node = g.input(gt.clone()).unwrap();
            let ssd = g.sum_sq_diff(pred, gt_node).unwrap();
            let loss = g.scale(ssd, 3.0 / gt.numel() as f64).unwrap();
            g.value(loss).item()
        };

        let mut g = Graph::new();
        let fwd = cfg.build(&mut g, &store, &skeleton, &sensing, &inputs).unwrap();
        let init = g.input(inputs.init_rows.clone()).unwrap();
        let pred = g.add(init, fwd.displacement).unwrap();
        let gt_node = g.input(gt.clone()).unwrap();
        let ssd = g.sum_sq_diff(pred, gt_node).unwrap();
        let loss = g.scale(ssd, 3.0 / gt.numel() as f64).unwrap();
        let grads = g.backward(loss).unwrap();
        let analytic = g.param_grads(&grads);
        assert!(!analytic.is_empty());

        for (name, grad) in &analytic {
            let base = store.get(name).unwrap().clone();
            let numeric = numeric_gradient(
                |probe| {
                    let mut s = store.clone();
                    s.insert(name, probe.clone());
                    loss_of(&s)
                },
                &base,
                1e-5,
            );
            let err = max_rel_err(grad, &numeric);
            assert!(err < 1e-3, "{name}: max rel err {err:.2e}");
        }
    }

    #[test]
    fn full_pipeline_is_rigidly_equivariant() {
        let init_cfg = InitNetConfig { pointnet_widths: [8, 16, 16], mlp_hidden: [16, 16] };
        let disp_cfg = tiny_cfg();
        let sensing = SensingConfig {
            crop_samples: 96,
            window_k: 2,
            max_joint_points: 40,
            ..SensingConfig::default()
        };
        let mut store = ParamStore::new();
        init_cfg.register(&sensing, &mut store, 13);
        disp_cfg.register(&mut store, 13);
        let skeleton = Skeleton::default_template();

        let object = ObjectSpec::Box { half_extents: [0.03, 0.025, 0.04] }.mesh();
        let t_count = 3;
        let frames: Vec<RigidMotion> = (0..t_count)
            .map(|i| RigidMotion {
                rotation: rodrigues(&Vec3::new(0.1, 0.05 * i as f64, -0.2)),
                translation: Vec3::new(0.01 * i as f64, -0.02, 0.06),
            })
            .collect();
        let hand = HandTrajectory { frames, fps: 30.0 };

        let r_star = rodrigues(&Vec3::new(0.7, -1.1, 0.4));
        let t_star = Vec3::new(0.3, 0.8, -0.5);
        let moved_object = object.transformed(&r_star, &t_star);
        let moved_hand = HandTrajectory {
            frames: hand
                .frames
                .iter()
                .map(|f| RigidMotion {
                    rotation: r_star * f.rotation,
                    translation: r_star * f.translation + t_star,
                })
                .collect(),
            fps: hand.fps,
        };

        let predict = |object: &crate::geom::TriMesh, hand: &HandTrajectory| {
            let mut clouds = Vec::new();
            let mut init_joints = Vec::new();
            for t in 0..t_count {
                let sensed = sense_frame(object, hand, t, &sensing, split_seed(50, t as u64));
                let rel = init_cfg.predict(&store, &sensing, &sensed).unwrap();
                let f = &hand.frames[t];
                init_joints.push(joints_to_global(&rel, &f.rotation, &f.translation));
                clouds.push(sensed.cloud_world);
            }
            let inputs = disp_inputs(&skeleton, hand, &clouds, &init_joints, &sensing, 77);
            disp_cfg.predict(&store, &skeleton, &sensing, &inputs).unwrap()
        };

        let base = predict(&object, &hand);
        let moved = predict(&moved_object, &moved_hand);
        for t in 0..t_count {
            for k in 0..JOINT_COUNT {
                let expect = r_star * base[t][k] + t_star;
                assert!(
                    (expect - moved[t][k]).norm() < 1e-6,
                    "frame {t} joint {k}: {:?} vs {:?}",
                    expect,
                    moved[t][k]
                );
            }
        }
    }

    #[test]
    fn short_and_long_sequences_share_the_position_table() {
        let cfg = DispNetConfig { max_frames: 4, ..tiny_cfg() };
        let mut store = ParamStore::new();
        cfg.register(&mut store, 9);
        assert_eq!(store.get("disp.pos").unwrap().shape(), &[4, cfg.d_model()]);
        let skeleton = Skeleton::default_template();
        let sensing = SensingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Longer than max_frames: frames beyond the table clamp to its last
        // row instead of failing.
        let inputs = random_inputs(&mut rng, 6, 2);
        let refined = cfg.predict(&store, &skeleton, &sensing, &inputs).unwrap();
        assert_eq!(refined.len(), 6);
    }
}
