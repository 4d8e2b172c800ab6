use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvprop_cli::pipeline::{self, FuseReport};
use mvprop_cli::{CliError, PipelineConfig};
use mvprop_core::annotate::BoxesFile;
use mvprop_core::eval::ScoredDetection;
use mvprop_core::synth::render::{generate_scene, write_scene, SceneSpec};
use mvprop_core::synth::scenes::{occlusion_scene, tabletop_scene};

#[derive(Parser)]
#[command(name = "mvprop", version, about = "Multi-view RGB-D object proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config JSON (optional `defaults` layer plus overrides).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set hough.max_planes=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        PipelineConfig::resolve(self.config.as_deref(), &self.sets)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Tabletop,
    Occlusion,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the metric scale and fuse all frames into one world cloud.
    Fuse {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        correspondences: Option<PathBuf>,
        /// Use this scale instead of estimating it.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Detect planes in a PLY cloud.
    Planes {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Also write one filtered cloud per removal fraction.
        #[arg(long)]
        filtered: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate 3D proposals from a PLY cloud.
    Propose {
        #[arg(long)]
        cloud: PathBuf,
        /// Planes JSON from `planes`; detected afresh when omitted.
        #[arg(long)]
        planes: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Project 3D proposals into every frame as 2D boxes.
    Project {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Take the scale from a `fuse` report.
        #[arg(long, conflicts_with = "alpha")]
        fuse_report: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recall, proposal labels and (with detections) average precision.
    Eval {
        /// Proposal boxes JSON.
        #[arg(long)]
        proposals: PathBuf,
        /// Ground-truth boxes JSON.
        #[arg(long)]
        ground_truth: PathBuf,
        /// Scored detections JSON list.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render a synthetic scene directory.
    Synth {
        /// Scene spec JSON.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Full multi-view flow with a manifest.
    RunMultiview(RunArgs),
    /// Per-frame flow without fusion, with a manifest.
    RunSingleview(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Shorthand for `--set scene=...`.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Shorthand for `--set output=...`.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

impl RunArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut c = self.cfg.resolve()?;
        if self.scene.is_some() {
            c.scene = self.scene.clone();
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        Ok(c)
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::output(dir))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fuse {
            scene,
            correspondences,
            alpha,
            output,
            cfg,
        } => {
            let mut config = cfg.resolve()?;
            config.correspondences = correspondences.or(config.correspondences);
            config.alpha = alpha.or(config.alpha);
            config.validate()?;
            let fused = pipeline::fuse(&config, &scene)?;
            create_dir(&output)?;
            pipeline::write_fused(&output, &fused)
        }
        Command::Planes {
            cloud,
            output,
            filtered,
            cfg,
        } => {
            let config = cfg.resolve()?;
            let cloud = pipeline::read_cloud(&cloud)?;
            let planes = pipeline::planes(&config, &cloud)?;
            create_dir(&output)?;
            pipeline::write_json(&output.join(pipeline::PLANES_FILE), &planes)?;
            if filtered {
                pipeline::write_filtered_clouds(
                    &output,
                    &cloud,
                    &planes,
                    &config.proposals.plane_fractions,
                )?;
            }
            Ok(())
        }
        Command::Propose {
            cloud,
            planes,
            output,
            cfg,
        } => {
            let config = cfg.resolve()?;
            let cloud = pipeline::read_cloud(&cloud)?;
            let planes = match planes {
                Some(p) => pipeline::load_planes(&p, &cloud, config.hough.inlier_threshold)?,
                None => pipeline::planes(&config, &cloud)?,
            };
            let proposals = pipeline::propose(&config, &cloud, &planes)?;
            create_dir(&output)?;
            pipeline::write_proposals(&output, &proposals)
        }
        Command::Project {
            scene,
            cloud,
            proposals,
            alpha,
            fuse_report,
            output,
            cfg,
        } => {
            let mut config = cfg.resolve()?;
            if let Some(path) = fuse_report {
                let report: FuseReport = pipeline::read_json(&path)?;
                config.alpha = Some(report.alpha);
            }
            config.alpha = alpha.or(config.alpha);
            config.validate()?;
            let cloud = pipeline::read_cloud(&cloud)?;
            let proposals = pipeline::load_proposals(&proposals, &cloud)?;
            let frames = pipeline::load_frames(&scene)?;
            let (scale, _) = pipeline::scene_scale(&config, &scene, frames.len())?;
            let metric = pipeline::metric_frames(&frames, scale.alpha);
            let boxes = pipeline::project(&config, &proposals, &cloud, &metric)?;
            create_dir(&output)?;
            pipeline::write_json(
                &output.join(pipeline::BOXES_FILE),
                &BoxesFile { frames: boxes },
            )
        }
        Command::Eval {
            proposals,
            ground_truth,
            detections,
            output,
            cfg,
        } => {
            let config = cfg.resolve()?;
            let boxes: BoxesFile = pipeline::read_json(&proposals)?;
            let gt: BoxesFile = pipeline::read_json(&ground_truth)?;
            let dets: Option<Vec<ScoredDetection>> =
                detections.map(|p| pipeline::read_json(&p)).transpose()?;
            let e = pipeline::evaluate(&config.eval, &boxes.frames, &gt.frames, dets.as_deref())?;
            create_dir(&output)?;
            pipeline::write_evaluation(&output, &e)
        }
        Command::Synth {
            spec,
            preset,
            seed,
            output,
        } => {
            let spec = match (spec, preset) {
                (Some(p), _) => {
                    pipeline::require_file(&p, "scene spec")?;
                    SceneSpec::load(&p).map_err(|e| CliError::Validation(e.to_string()))?
                }
                (None, Some(Preset::Tabletop)) => tabletop_scene(),
                (None, Some(Preset::Occlusion)) => occlusion_scene(),
                (None, None) => unreachable!("clap requires --spec or --preset"),
            };
            let truth = generate_scene(&spec, seed).map_err(CliError::stage("synth"))?;
            write_scene(&truth, &spec, &output).map_err(CliError::stage("synth"))
        }
        Command::RunMultiview(args) => pipeline::run_multiview(&args.resolve()?).map(|_| ()),
        Command::RunSingleview(args) => pipeline::run_singleview(&args.resolve()?).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mvprop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
