use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gears::pipeline::{
    cmd_eval, cmd_export, cmd_infer, cmd_synth, cmd_train, PipelineConfig, PipelineError,
};

#[derive(Parser)]
#[command(name = "gears", version, about = "Hand-object interaction pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Pipeline config JSON; unset fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config's.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Ablation {
    /// Drop every attention block from the displacement network.
    #[arg(long)]
    no_attention: bool,
    /// Override the joint sensor radius in meters (0 disables the sensors).
    #[arg(long)]
    sensor_radius: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic grasp corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Corpus directory to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_train: usize,
        #[arg(long, default_value_t = 2)]
        n_test: usize,
    },
    /// Train both network stages on a corpus; reruns resume.
    Train {
        #[command(flatten)]
        common: Common,
        /// Corpus directory produced by `synth`.
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint/log directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Predict joints and a fitted hand for one record.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input sequence record (.json).
        #[arg(long)]
        record: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Skip the displacement network, keeping the coarse initialization.
        #[arg(long)]
        no_displacement: bool,
        /// Write the hand mesh for this frame only.
        #[arg(long)]
        frame: Option<usize>,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Score a prediction record against a ground-truth record.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Prediction record (.json).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth record (.json).
        #[arg(long)]
        gt: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-frame meshes and joints for a record.
    Export {
        /// Sequence record (.json).
        #[arg(long)]
        record: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common, ablation: Option<&Ablation>) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_path(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(ab) = ablation {
        if ab.no_attention {
            cfg.nets.disp.attn_pairs = 0;
        }
        if let Some(r) = ab.sensor_radius {
            cfg.nets.sensing.sensor_radius = r;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.cmd {
        Cmd::Synth { common, out, n_train, n_test } => {
            let cfg = load_config(&common, None)?;
            let summary = cmd_synth(&cfg, n_train, n_test, &out)?;
            println!(
                "wrote {} records to {} ({} grasp rejections, {} sweep rejections)",
                summary.written,
                out.display(),
                summary.grasp_rejections,
                summary.sweep_rejections
            );
        }
        Cmd::Train { common, corpus, out, ablation } => {
            let cfg = load_config(&common, Some(&ablation))?;
            let log = cmd_train(&cfg, &corpus, &out)?;
            let stage_loss = |stage: u8| log.iter().rev().find(|e| e.stage == stage);
            for stage in [1u8, 2] {
                match stage_loss(stage) {
                    Some(e) => println!(
                        "stage {stage}: {} epochs this run, last loss {:.6e}",
                        log.iter().filter(|e| e.stage == stage).count(),
                        e.loss
                    ),
                    None => println!("stage {stage}: nothing left to train"),
                }
            }
            println!("checkpoint and log in {}", out.display());
        }
        Cmd::Infer { common, checkpoint, record, out, no_displacement, frame, ablation } => {
            let cfg = load_config(&common, Some(&ablation))?;
            let result = cmd_infer(&cfg, &checkpoint, &record, &out, !no_displacement, frame)?;
            println!(
                "wrote {} and {} hand meshes (fit loss {:.6e})",
                result.record_path.display(),
                result.mesh_paths.len(),
                result.fit.loss
            );
        }
        Cmd::Eval { common, pred, gt, out } => {
            let cfg = load_config(&common, None)?;
            let report = cmd_eval(&cfg, &pred, &gt, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Export { record, out } => {
            let frames = cmd_export(&record, &out)?;
            println!("wrote {frames} frames to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
