use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dynscene::dataset::{ate_rmse, load_trajectory};
use dynscene::fusion::FusionConfig;
use dynscene::labels::MovableClasses;
use dynscene::octree::{load_map, MapConfig};
use dynscene::pipeline::{run_pipeline, KeyframePolicy, OutputPaths, RunConfig};
use dynscene::synthetic::{eval_map, generate_synthetic, EvalOptions, SyntheticScene};

#[derive(Parser)]
#[command(name = "dynscene", version, about = "Dynamic-scene RGB-D mapping with movable-object prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run prediction, culling and semantic mapping over a TUM-layout sequence.
    Run(Box<RunArgs>),
    /// Render a synthetic scene into a TUM-layout sequence.
    Generate {
        /// Scene description (JSON). Defaults to the built-in moving-box scene.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved map against the synthetic scene it was built from.
    EvalMap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Pixel stride the map was built with.
        #[arg(long, default_value_t = 2)]
        stride: u32,
        /// Keyframe interval the map was built with. Defaults to the scene's.
        #[arg(long)]
        keyframe_every: Option<usize>,
    },
    /// Absolute trajectory error between two TUM trajectories.
    Ate {
        #[arg(long)]
        estimated: PathBuf,
        #[arg(long)]
        groundtruth: PathBuf,
        /// Rigidly align the estimate before scoring.
        #[arg(long)]
        align: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    sequence: PathBuf,
    /// Detections file; frames carrying detections become keyframes unless
    /// --keyframe-every is given.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// TUM trajectory to use instead of the sequence's groundtruth.txt.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    keyframe_every: Option<usize>,
    /// Comma-separated class names.
    #[arg(long)]
    movable_classes: Option<String>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau_static: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau_movable: Option<f64>,
    #[arg(long)]
    occupancy_threshold: Option<f64>,
    /// Depth pixel stride for map insertion.
    #[arg(long, default_value_t = 2)]
    stride: u32,
    /// Pixel margin around predicted boxes for keypoint culling.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Single-threaded, fixed-order processing.
    #[arg(long)]
    deterministic: bool,
    /// Insert every point as static.
    #[arg(long)]
    no_association: bool,
    /// Append camera-frame corners to each box line.
    #[arg(long)]
    camera_frame_boxes: bool,
    #[arg(long)]
    out_map: Option<PathBuf>,
    #[arg(long)]
    out_boxes: Option<PathBuf>,
    #[arg(long)]
    out_points: Option<PathBuf>,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
    #[arg(long)]
    export_ply: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let policy = match self.keyframe_every {
            Some(n) => KeyframePolicy::EveryN(n),
            None => KeyframePolicy::FromDetections,
        };
        let movable = match &self.movable_classes {
            Some(list) => MovableClasses::parse_list(list).context("--movable-classes")?,
            None => MovableClasses::default(),
        };
        let mut map = MapConfig::default();
        if let Some(v) = self.voxel_size {
            map.voxel_size = v;
        }
        if let Some(v) = self.tau_static {
            map.tau_static = v;
        }
        if let Some(v) = self.tau_movable {
            map.tau_movable = v;
        }
        if let Some(v) = self.occupancy_threshold {
            map.occupancy_threshold = v;
        }
        let mut cfg = RunConfig::new(self.sequence, policy);
        cfg.detections = self.detections;
        cfg.trajectory = self.trajectory;
        cfg.fusion = FusionConfig {
            movable,
            ..FusionConfig::default()
        };
        cfg.map = map;
        cfg.stride = self.stride;
        cfg.margin = self.margin;
        cfg.semantic = !self.no_association;
        cfg.camera_frame_boxes = self.camera_frame_boxes;
        cfg.deterministic = self.deterministic;
        cfg.outputs = OutputPaths {
            map: self.out_map,
            boxes: self.out_boxes,
            points: self.out_points,
            metrics: self.out_metrics,
            ply: self.export_ply,
        };
        Ok(cfg)
    }
}

fn load_scene(path: Option<&PathBuf>) -> Result<SyntheticScene> {
    match path {
        None => Ok(SyntheticScene::moving_box()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let out = run_pipeline(&cfg)?;
            print!("{}", out.report);
        }
        Command::Generate { scene, out } => {
            let scene = load_scene(scene.as_ref())?;
            let s = generate_synthetic(&scene, &out)?;
            println!("frames={}", s.frames);
            println!("detection_frames={}", s.detection_frames);
            println!("detections={}", s.detections);
        }
        Command::EvalMap {
            map,
            scene,
            stride,
            keyframe_every,
        } => {
            let scene = load_scene(scene.as_ref())?;
            let map = load_map(&map)?;
            let opts = EvalOptions {
                stride,
                keyframe_every: keyframe_every.unwrap_or(scene.keyframe_every),
            };
            print!("{}", eval_map(&map, &scene, opts));
        }
        Command::Ate {
            estimated,
            groundtruth,
            align,
        } => {
            let r = ate_rmse(&load_trajectory(&estimated)?, &load_trajectory(&groundtruth)?, align)?;
            println!("rmse={:.9}", r.rmse);
            println!("pairs={}", r.pairs);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
