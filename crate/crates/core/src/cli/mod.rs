//! Command-line front end: `synth`, `annotate`, `eval` and `overlay`.

mod overlay;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use overlay::{render_overlay, OverlayFormat};

use crate::association::AssociationParams;
use crate::evaluate::{evaluate, EvalConfig};
use crate::optimize::SolverOptions;
use crate::pipeline::{annotate_with_threads, PipelineConfig, PipelineError};
use crate::proposal::ProposalParams;
use crate::scene::{json, load_annotations, load_scene, save_annotations, save_scene};
use crate::synth::{corrupt, generate_scene, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_TRACKS: i32 = 3;

/// Contents of the `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SynthConfig,
    pub association: AssociationParams,
    pub proposal: ProposalParams,
    pub solver: SolverOptions,
    pub eval: EvalConfig,
}

impl FileConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { association: self.association, proposal: self.proposal, solver: self.solver, eval: self.eval }
    }

    pub fn from_toml(text: &str) -> Result<FileConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "roadlift", version, about = "Parametric 3D annotation of static road objects")]
struct Cli {
    /// TOML file with [synth], [association], [proposal], [solver] and [eval] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth objects as an annotation file.
        #[arg(long)]
        gt_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct annotations from a scene.
    Annotate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Plain least squares instead of the Huber loss.
        #[arg(long)]
        no_robust_loss: bool,
    },
    /// Score annotations against a reference.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Reference annotations; defaults to the scene's ground truth.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip frames whose paired sweep is further apart than this (ms).
        #[arg(long, num_args = 0..=1, default_missing_value = "10")]
        timestamp_filter_ms: Option<f64>,
    },
    /// Draw projected annotations of one frame (SVG, or PPM by extension).
    Overlay {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        frame: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also draw the scene's ground truth.
        #[arg(long)]
        gt: bool,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn input(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, message: message.into() }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

fn distinct(a: &Path, b: &Path) -> Result<(), Failure> {
    if a == b {
        return Err(input(format!("input and output are the same file: {}", a.display())));
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|_| input(format!("{} is not UTF-8", p.display())))?;
            FileConfig::from_toml(&text).map_err(|e| input(format!("config {}: {e}", p.display())))
        }
    }
}

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { out, gt_out, seed } => {
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            let (scene, gt) = generate_scene(&cfg.synth).map_err(|e| input(e.to_string()))?;
            let scene = corrupt(&scene, &cfg.synth).map_err(|e| input(e.to_string()))?;
            write(&out, &save_scene(&scene))?;
            if let Some(p) = gt_out {
                distinct(&out, &p)?;
                write(&p, &save_annotations(&gt.to_annotations()))?;
            }
            println!(
                "synth: {} frames, {} observations, {} map points, {} objects",
                scene.frames().len(),
                scene.observations().len(),
                scene.map_points().len(),
                gt.objects.len()
            );
            Ok(())
        }
        Command::Annotate { scene, out, threads, no_robust_loss } => {
            distinct(&scene, &out)?;
            let s = load_scene(&read(&scene)?).map_err(|e| input(format!("{}: {e}", scene.display())))?;
            let mut pc = cfg.pipeline();
            if no_robust_loss {
                pc.solver.huber_delta = f64::INFINITY;
            }
            let threads = threads.unwrap_or_else(rayon::current_num_threads);
            let result = annotate_with_threads(&s, &pc, threads).map_err(|e| match e {
                PipelineError::Config(m) => input(m),
                e @ PipelineError::NoValidTracks { .. } => Failure { code: EXIT_NO_TRACKS, message: e.to_string() },
            })?;
            write(&out, &save_annotations(&result.annotations))?;
            let st = &result.stats;
            println!(
                "annotate: {} annotations from {} tracks ({} valid), {} observations ({} gated as occluded)",
                result.annotations.len(),
                st.n_tracks,
                st.n_valid_tracks,
                st.n_observations,
                st.n_occluded
            );
            Ok(())
        }
        Command::Eval { scene, pred, reference, out, timestamp_filter_ms } => {
            let s = load_scene(&read(&scene)?).map_err(|e| input(format!("{}: {e}", scene.display())))?;
            let p = load_annotations(&read(&pred)?).map_err(|e| input(format!("{}: {e}", pred.display())))?;
            let r = match &reference {
                Some(path) => load_annotations(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?,
                None => s
                    .ground_truth()
                    .map(|g| g.to_annotations())
                    .ok_or_else(|| input("no --ref given and the scene has no ground truth"))?,
            };
            if timestamp_filter_ms.is_some() {
                cfg.eval.timestamp_filter_ms = timestamp_filter_ms;
            }
            cfg.eval.validate().map_err(input)?;
            let report = evaluate(&p, &r, s.frames(), &cfg.eval);
            for (name, m) in [("2d", &report.eval_2d), ("3d", &report.eval_3d)] {
                println!(
                    "{name}: precision={:.4} recall={:.4} mean_error={:.6} matched={} pred={} ref={}",
                    m.precision, m.recall, m.mean_error, m.n_matched, m.n_pred, m.n_ref
                );
            }
            if let Some(o) = out {
                for i in [Some(&scene), Some(&pred), reference.as_ref()].into_iter().flatten() {
                    distinct(i, &o)?;
                }
                write(&o, &json::to_canonical_json(&report))?;
            }
            Ok(())
        }
        Command::Overlay { scene, annotations, frame, out, gt } => {
            let s = load_scene(&read(&scene)?).map_err(|e| input(format!("{}: {e}", scene.display())))?;
            let a = load_annotations(&read(&annotations)?)
                .map_err(|e| input(format!("{}: {e}", annotations.display())))?;
            let f = s.frame(frame).ok_or_else(|| input(format!("unknown frame {frame}")))?;
            let reference = if gt { s.ground_truth().map(|g| g.to_annotations()) } else { None };
            let format = OverlayFormat::from_path(&out);
            write(&out, &render_overlay(f, &a, reference.as_deref(), format))?;
            Ok(())
        }
    }
}
