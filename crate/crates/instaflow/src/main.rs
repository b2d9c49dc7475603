//! Thin command-line front end over the library: scene validation,
//! condition rendering, scenario synthesis, toy training and generation.
//! Exit codes: 0 success, 1 domain validation failure, 2 I/O or format
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use instaflow::depth::DepthEncoderConfig;
use instaflow::latent::decode_latent_preview;
use instaflow::pipeline::{
    build_conditions, build_sample, build_target, load_scene_dir, render_flow, render_lanes,
    render_layout, RenderOptions,
};
use instaflow::projection::{BoxStyle, CLASS_PALETTE};
use instaflow::scenario::{build_scenario, ScenarioSpec};
use instaflow::scene::{validate_scene, SceneSequence};
use instaflow::stdit::{
    generate, load_checkpoint, save_checkpoint, train_loop, NoiseSchedule, ToyStDiT,
    ToyStDiTConfig,
};
use instaflow::{Error, Result};

#[derive(Parser)]
#[command(name = "instaflow", version, about = "Driving-scene conditioning pipeline and toy diffusion transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RenderWhat {
    Flow,
    Layout,
    Lanes,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scene JSON against every structural invariant.
    Validate {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Render per-frame condition images for one camera.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        what: RenderWhat,
        #[arg(long)]
        camera: Option<usize>,
        /// Flow encoding range in meters.
        #[arg(long)]
        flow_range: Option<f64>,
        /// Draw box edges instead of filled hulls.
        #[arg(long)]
        wireframe: bool,
        /// Write PNG instead of binary PPM.
        #[arg(long)]
        png: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic scenario and write its scene JSON.
    Scenario {
        /// Scenario spec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy model on a directory of scene JSONs.
    Train {
        /// Directory of *.json scenes (rendered into condition/latent
        /// pairs deterministically at load time).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        camera: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Loss log CSV path (default: <out>.loss.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sample a latent video under a scene's conditions.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        camera: Option<usize>,
        /// Clamp frame 0 to the scene's own first-frame latent.
        #[arg(long)]
        clamp_first: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        flow_range: Option<f64>,
    },
}

/// Optional JSON config file; command-line flags override its fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    model: ToyStDiTConfig,
    flow_range: f64,
    lr: f64,
    train_steps: usize,
    camera: usize,
    palette: Option<[[u8; 3]; 16]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ToyStDiTConfig::default(),
            flow_range: 10.0,
            lr: 1e-2,
            train_steps: 500,
            camera: 0,
            palette: None,
        }
    }
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    fn render_options(&self, flow_range: Option<f64>, wireframe: bool) -> RenderOptions {
        RenderOptions {
            flow_range: flow_range.unwrap_or(self.flow_range),
            style: if wireframe { BoxStyle::Wireframe } else { BoxStyle::Filled },
            palette: self.palette.unwrap_or(CLASS_PALETTE),
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Format(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("INSTAFLOW_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            _ => eprintln!("warning: ignoring invalid INSTAFLOW_THREADS={threads}"),
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_scene(path: &Path) -> Result<SceneSequence> {
    let text = std::fs::read_to_string(path)?;
    SceneSequence::from_json(&text)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { scene } => {
            let scene = load_scene(&scene)?;
            let report = validate_scene(&scene);
            print!("{report}");
            Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Command::Render { scene, out, what, camera, flow_range, wireframe, png, config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let scene = load_scene(&scene)?;
            std::fs::create_dir_all(&out)?;
            let opts = cfg.render_options(flow_range, wireframe);
            let camera = camera.unwrap_or(cfg.camera);
            let ext = if png { "png" } else { "ppm" };
            let kinds: Vec<RenderWhat> = match what {
                RenderWhat::All => vec![RenderWhat::Flow, RenderWhat::Layout, RenderWhat::Lanes],
                single => vec![single],
            };

            use rayon::prelude::*;
            let jobs: Vec<(usize, RenderWhat)> = (0..scene.len())
                .flat_map(|t| kinds.iter().map(move |&k| (t, k)))
                .collect();
            let written = jobs
                .par_iter()
                .map(|&(t, kind)| -> Result<()> {
                    let (img, name) = match kind {
                        RenderWhat::Flow => {
                            (render_flow(&scene, camera, t, opts.flow_range)?.image, "flow")
                        }
                        RenderWhat::Layout => (render_layout(&scene, camera, t, &opts)?, "layout"),
                        RenderWhat::Lanes => (render_lanes(&scene, camera, t)?, "lanes"),
                        RenderWhat::All => unreachable!(),
                    };
                    let path = out.join(format!("frame_{t:04}_{name}_{camera}.{ext}"));
                    if png {
                        img.write_png(&path)
                    } else {
                        img.write_ppm(&path)
                    }
                })
                .collect::<Result<Vec<()>>>()?
                .len();
            println!("wrote {written} files to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Scenario { spec, seed, out } => {
            let spec = match spec {
                None => ScenarioSpec::default(),
                Some(p) => {
                    let text = std::fs::read_to_string(&p)?;
                    serde_json::from_str(&text)?
                }
            };
            let scene = build_scenario(&spec, seed)?;
            instaflow::img::atomic_write(&out, scene.to_json().as_bytes())?;
            println!(
                "scenario: {} actors, {} events, {} frames -> {}",
                spec.actors.len(),
                spec.events.len(),
                spec.frames,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Train { data, out, steps, seed, camera, config, log } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.model.seed = s;
            }
            let steps = steps.unwrap_or(cfg.train_steps);
            let camera = camera.unwrap_or(cfg.camera);
            let opts = cfg.render_options(None, false);

            let scenes = load_scene_dir(&data)?;
            if scenes.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "no scene JSONs found in {}",
                    data.display()
                )));
            }
            let depth_cfg = DepthEncoderConfig {
                d_model: cfg.model.d_model,
                ..cfg.model.depth_encoder
            };
            cfg.model.depth_encoder = depth_cfg;
            let batch: Vec<_> = scenes
                .iter()
                .map(|(_, scene)| build_sample(scene, camera, &opts, &depth_cfg))
                .collect::<Result<_>>()?;

            let mut model = ToyStDiT::new(cfg.model.clone())?;
            let schedule =
                NoiseSchedule::new(&cfg.model.noise_schedule, cfg.model.diffusion_steps)?;
            let losses = train_loop(&mut model, &schedule, &batch, steps, cfg.lr, cfg.model.seed)?;

            save_checkpoint(&model, &out)?;
            let log_path = log.unwrap_or_else(|| out.with_extension("loss.csv"));
            let mut csv = String::from("step,loss\n");
            for (i, l) in losses.iter().enumerate() {
                csv.push_str(&format!("{i},{l}\n"));
            }
            instaflow::img::atomic_write(&log_path, csv.as_bytes())?;
            let first = losses.first().copied().unwrap_or(0.0);
            let last = losses.last().copied().unwrap_or(0.0);
            println!(
                "trained {} steps on {} samples: loss {first:.6} -> {last:.6}; checkpoint {}",
                losses.len(),
                batch.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Generate {
            checkpoint,
            scene,
            out,
            steps,
            seed,
            camera,
            clamp_first,
            config,
            flow_range,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let model = load_checkpoint(&checkpoint)?;
            let scene = load_scene(&scene)?;
            std::fs::create_dir_all(&out)?;
            let camera = camera.unwrap_or(cfg.camera);
            let opts = cfg.render_options(flow_range, false);
            let depth_cfg = model.config.depth_encoder;

            let conditions = build_conditions(&scene, camera, &opts, &depth_cfg)?;
            let shape = (
                conditions.motion.t,
                conditions.motion.h,
                conditions.motion.w,
                conditions.motion.c,
            );
            let first = if clamp_first {
                Some(build_target(&scene, camera, &opts)?.frame(0))
            } else {
                None
            };
            let schedule =
                NoiseSchedule::new(&model.config.noise_schedule, model.config.diffusion_steps)?;
            let steps = steps.unwrap_or(model.config.diffusion_steps);
            let prompt = scene.frames.first().map(|f| f.prompt.clone()).unwrap_or_default();

            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let video = generate(
                &model,
                &schedule,
                &conditions,
                &prompt,
                shape,
                first.as_ref(),
                steps,
                &mut rng,
            )?;

            video.write_binary(&out.join("latent.bin"))?;
            for t in 0..video.t {
                let preview = decode_latent_preview(&video, t);
                preview.write_ppm(&out.join(format!("frame_{t:04}_preview.ppm")))?;
            }
            println!(
                "generated {} frames of {}x{} latent into {}",
                video.t,
                video.h,
                video.w,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
