use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fit::{fit_sequence, FitResult};
use crate::geom::TriMesh;
use crate::hand::{hand_surface_mesh, JointSet, Skeleton};
use crate::math::split_seed;
use crate::metrics::{evaluate_sequence, MetricsInput, SequenceReport};
use crate::net::{predict_refined_sequence, train, LogEntry, TrainSequence};
use crate::nn::{self, ParamStore};
use crate::synth::generate_sequence_with_stats;

use super::record::{load_record, save_record, GtPose, Provenance, SequenceRecord};
use super::{PipelineConfig, PipelineError};

const CORPUS_FORMAT: &str = "gears-corpus";

#[derive(Serialize, Deserialize)]
struct CorpusManifest {
    format: String,
    config_hash: String,
    seed: u64,
    train: Vec<String>,
    test: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TrainState {
    stage1: usize,
    stage2: usize,
    config_hash: String,
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Synthesis accounting for one corpus run.
#[derive(Clone, Copy, Debug, Default)]
pub struct SynthSummary {
    pub written: usize,
    pub grasp_rejections: usize,
    pub sweep_rejections: usize,
}

/// Generates `n_train` + `n_test` sequences under `config.seed` and writes
/// records, meshes and a corpus manifest into `out_dir`. Sequence `i` of the
/// combined run always draws from `split_seed(seed, i)`, so regeneration is
/// byte-identical.
pub fn cmd_synth(
    cfg: &PipelineConfig,
    n_train: usize,
    n_test: usize,
    out_dir: &Path,
) -> Result<SynthSummary, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let skeleton = Skeleton::default_template();
    fs::create_dir_all(out_dir)?;

    let mut summary = SynthSummary::default();
    let mut manifest = CorpusManifest {
        format: CORPUS_FORMAT.to_string(),
        config_hash: hash.clone(),
        seed: cfg.seed,
        train: Vec::new(),
        test: Vec::new(),
    };
    for (split, count, base) in [("train", n_train, 0), ("test", n_test, n_train)] {
        for i in 0..count {
            let seed = split_seed(cfg.seed, (base + i) as u64);
            let (seq, stats) = generate_sequence_with_stats(&skeleton, &cfg.synth, seed)?;
            summary.grasp_rejections += stats.grasp_rejections;
            summary.sweep_rejections += stats.sweep_rejections;

            let rel = format!("{split}/seq_{i:03}.json");
            let record = SequenceRecord::from_synthetic(
                &seq,
                &skeleton,
                &format!("seq_{i:03}_object.obj"),
                Provenance { seed, config_hash: hash.clone() },
            );
            save_record(&record, &out_dir.join(&rel))?;
            match split {
                "train" => manifest.train.push(rel),
                _ => manifest.test.push(rel),
            }
            summary.written += 1;
        }
    }
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}

fn load_corpus_manifest(corpus_dir: &Path) -> Result<CorpusManifest, PipelineError> {
    let path = corpus_dir.join("manifest.json");
    let manifest: CorpusManifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if manifest.format != CORPUS_FORMAT {
        return Err(PipelineError::Record {
            path,
            msg: format!("unknown corpus format {:?}", manifest.format),
        });
    }
    Ok(manifest)
}

fn load_train_split(
    corpus_dir: &Path,
    manifest: &CorpusManifest,
) -> Result<Vec<TrainSequence>, PipelineError> {
    let mut dataset = Vec::with_capacity(manifest.train.len());
    for rel in &manifest.train {
        let path = corpus_dir.join(rel);
        let record = load_record(&path)?;
        let gt_joints = record.gt_joints.ok_or_else(|| PipelineError::Record {
            path,
            msg: "training requires gt_joints".to_string(),
        })?;
        dataset.push(TrainSequence {
            object: record.object,
            object_traj: record.object_traj,
            hand: record.hand_traj,
            gt_joints,
        });
    }
    Ok(dataset)
}

/// Trains both stages on the corpus's train split, checkpointing into
/// `out_dir` after every epoch. Re-running with the same `out_dir` resumes
/// from the saved state and appends to the log, continuing the exact
/// trajectory a single uninterrupted run would have produced.
pub fn cmd_train(
    cfg: &PipelineConfig,
    corpus_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<LogEntry>, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let skeleton = Skeleton::default_template();

    let manifest = load_corpus_manifest(corpus_dir)?;
    if manifest.config_hash != hash {
        eprintln!(
            "warning: corpus {} was generated under config {}, current config is {}",
            corpus_dir.display(),
            short(&manifest.config_hash),
            short(&hash)
        );
    }
    let dataset = load_train_split(corpus_dir, &manifest)?;

    fs::create_dir_all(out_dir)?;
    let state_path = out_dir.join("state.json");
    let log_path = out_dir.join("train_log.jsonl");
    let (mut store, completed) = if state_path.exists() {
        let state: TrainState = serde_json::from_str(&fs::read_to_string(&state_path)?)?;
        if state.config_hash != hash {
            eprintln!(
                "warning: checkpoint {} was trained under config {}, current config is {}",
                out_dir.display(),
                short(&state.config_hash),
                short(&hash)
            );
        }
        (nn::load(out_dir, "checkpoint")?, (state.stage1, state.stage2))
    } else {
        (ParamStore::new(), (0, 0))
    };

    // Trim the log to the checkpointed prefix so the appended continuation
    // reads as one seamless run.
    let mut log_text = String::new();
    if log_path.exists() {
        for line in fs::read_to_string(&log_path)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry = serde_json::from_str(line)?;
            let keep = match entry.stage {
                1 => entry.epoch < completed.0,
                _ => entry.epoch < completed.1,
            };
            if keep {
                log_text.push_str(line);
                log_text.push('\n');
            }
        }
    }
    fs::write(&log_path, &log_text)?;
    let mut log_file = fs::OpenOptions::new().append(true).open(&log_path)?;

    let mut side_err: Option<PipelineError> = None;
    let (mut s1, mut s2) = completed;
    let log = train(
        &cfg.nets,
        &cfg.train,
        &skeleton,
        &dataset,
        &mut store,
        cfg.seed,
        completed,
        |entry, params| {
            if side_err.is_some() {
                return;
            }
            match entry.stage {
                1 => s1 = entry.epoch + 1,
                _ => s2 = entry.epoch + 1,
            }
            let attempt = (|| -> Result<(), PipelineError> {
                let line = serde_json::to_string(entry)?;
                writeln!(log_file, "{line}")?;
                nn::save(params, out_dir, "checkpoint")?;
                write_json(
                    &state_path,
                    &TrainState { stage1: s1, stage2: s2, config_hash: hash.clone() },
                )?;
                Ok(())
            })();
            if let Err(e) = attempt {
                side_err = Some(e);
            }
        },
    )?;
    if let Some(e) = side_err {
        return Err(e);
    }
    // Zero-epoch schedules never reach the callback; make sure a loadable
    // checkpoint exists regardless.
    nn::save(&store, out_dir, "checkpoint")?;
    write_json(&state_path, &TrainState { stage1: s1, stage2: s2, config_hash: hash })?;
    Ok(log)
}

#[derive(Debug)]
pub struct InferOutput {
    pub record_path: PathBuf,
    pub joints: Vec<JointSet>,
    pub fit: FitResult,
    pub mesh_paths: Vec<PathBuf>,
}

/// Runs the full prediction pipeline on one record: per-frame sensing and
/// initialization, displacement refinement (unless disabled), then the
/// sequence-level hand fit. Writes a prediction record plus per-frame hand
/// meshes into `out_dir`.
pub fn cmd_infer(
    cfg: &PipelineConfig,
    checkpoint_dir: &Path,
    record_path: &Path,
    out_dir: &Path,
    with_displacement: bool,
    mesh_frame: Option<usize>,
) -> Result<InferOutput, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let record = load_record(record_path)?;
    let t = record.frames();
    if let Some(frame) = mesh_frame {
        if frame >= t {
            return Err(PipelineError::FrameOutOfRange { frame, frames: t });
        }
    }
    if record.provenance.config_hash != hash {
        eprintln!(
            "warning: record {} carries config {}, current config is {}",
            record_path.display(),
            short(&record.provenance.config_hash),
            short(&hash)
        );
    }
    let state_path = checkpoint_dir.join("state.json");
    if state_path.exists() {
        let state: TrainState = serde_json::from_str(&fs::read_to_string(&state_path)?)?;
        if state.config_hash != hash {
            eprintln!(
                "warning: checkpoint {} was trained under config {}, current config is {}",
                checkpoint_dir.display(),
                short(&state.config_hash),
                short(&hash)
            );
        }
    }
    let store = nn::load(checkpoint_dir, "checkpoint")?;
    let skeleton = Skeleton::default_template();

    let joints = predict_refined_sequence(
        &cfg.nets,
        &store,
        &skeleton,
        &record.object,
        &record.object_traj,
        &record.hand_traj,
        cfg.seed,
        with_displacement,
    )?;
    let fit = fit_sequence(&skeleton, &joints, &record.hand_traj, &cfg.fit, None)?;

    fs::create_dir_all(out_dir)?;
    let stem = record_path.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
    let out_record = SequenceRecord {
        fps: record.fps,
        object_mesh_path: PathBuf::from(format!("{stem}_object.obj")),
        object: record.object.clone(),
        object_traj: record.object_traj.clone(),
        hand_traj: record.hand_traj.clone(),
        gt_joints: Some(joints.clone()),
        gt_pose: Some(GtPose {
            shape: fit.shape.clone(),
            theta: fit.poses.iter().map(|p| p.theta).collect(),
        }),
        provenance: Provenance { seed: cfg.seed, config_hash: hash },
    };
    let out_record_path = out_dir.join(format!("{stem}_pred.json"));
    save_record(&out_record, &out_record_path)?;

    let frames: Vec<usize> = match mesh_frame {
        Some(f) => vec![f],
        None => (0..t).collect(),
    };
    let mut mesh_paths = Vec::with_capacity(frames.len());
    for f in frames {
        let mesh = hand_surface_mesh(&skeleton, &fit.shape, &fit.poses[f]);
        let path = out_dir.join(format!("hand_{f:03}.obj"));
        mesh.write_obj(&path)?;
        mesh_paths.push(path);
    }
    Ok(InferOutput { record_path: out_record_path, joints, fit, mesh_paths })
}

/// Scores a prediction record against a ground-truth record and returns the
/// metrics report, optionally writing it as JSON.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    pred_path: &Path,
    gt_path: &Path,
    out_path: Option<&Path>,
) -> Result<SequenceReport, PipelineError> {
    cfg.validate()?;
    let pred = load_record(pred_path)?;
    let gt = load_record(gt_path)?;
    if pred.provenance.config_hash != gt.provenance.config_hash {
        eprintln!(
            "warning: prediction and ground truth carry different config hashes ({} vs {})",
            short(&pred.provenance.config_hash),
            short(&gt.provenance.config_hash)
        );
    }

    let need = |path: &Path, what: &str| PipelineError::Record {
        path: path.to_path_buf(),
        msg: format!("evaluation requires {what}"),
    };
    let gt_joints = gt.gt_joints.as_ref().ok_or_else(|| need(gt_path, "gt_joints"))?;
    let pred_joints = pred.gt_joints.as_ref().ok_or_else(|| need(pred_path, "joints"))?;
    let gt_poses = gt.poses().ok_or_else(|| need(gt_path, "a pose"))?;
    let pred_poses = pred.poses().ok_or_else(|| need(pred_path, "a pose"))?;
    let gt_shape = &gt.gt_pose.as_ref().expect("poses imply gt_pose").shape;
    let pred_shape = &pred.gt_pose.as_ref().expect("poses imply gt_pose").shape;

    let skeleton = Skeleton::default_template();
    let gt_hand: Vec<TriMesh> =
        gt_poses.iter().map(|p| hand_surface_mesh(&skeleton, gt_shape, p)).collect();
    let pred_hand: Vec<TriMesh> =
        pred_poses.iter().map(|p| hand_surface_mesh(&skeleton, pred_shape, p)).collect();
    let object: Vec<TriMesh> = (0..gt.frames()).map(|t| gt.object_at(t)).collect();

    let input = MetricsInput {
        gt_joints,
        pred_joints,
        gt_hand: &gt_hand,
        pred_hand: &pred_hand,
        object: &object,
    };
    let report = evaluate_sequence(&input, cfg.eval.iv_voxel, cfg.eval.contact_tol)?;
    if let Some(path) = out_path {
        write_json(path, &report)?;
    }
    Ok(report)
}

/// Writes per-frame posed object meshes (and hand meshes plus a joints JSON
/// when the record carries them) for external viewers.
pub fn cmd_export(record_path: &Path, out_dir: &Path) -> Result<usize, PipelineError> {
    let record = load_record(record_path)?;
    fs::create_dir_all(out_dir)?;
    let skeleton = Skeleton::default_template();
    let poses = record.poses();
    for t in 0..record.frames() {
        record.object_at(t).write_obj(&out_dir.join(format!("object_{t:03}.obj")))?;
        if let Some(poses) = &poses {
            let shape = &record.gt_pose.as_ref().expect("poses imply gt_pose").shape;
            hand_surface_mesh(&skeleton, shape, &poses[t])
                .write_obj(&out_dir.join(format!("hand_{t:03}.obj")))?;
        }
    }
    if let Some(joints) = &record.gt_joints {
        let rows: Vec<Vec<[f64; 3]>> = joints
            .iter()
            .map(|frame| frame.iter().map(|j| [j.x, j.y, j.z]).collect())
            .collect();
        write_json(&out_dir.join("joints.json"), &rows)?;
    }
    Ok(record.frames())
}
