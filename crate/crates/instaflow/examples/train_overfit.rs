//! Overfits the toy diffusion transformer on two synthetic scenes and
//! prints the loss trajectory. Smaller step counts make a quick demo;
//! `cargo run --release --example train_overfit -- 500` runs the full
//! desk-scale fit.

use instaflow::depth::{DepthEncoderConfig, FourierSpec};
use instaflow::pipeline::{build_sample, RenderOptions};
use instaflow::scenario::{build_scenario, ActorSpec, EventKind, EventSpec, RigSpec, ScenarioSpec};
use instaflow::stdit::{train_loop, NoiseSchedule, Sample, ToyStDiT, ToyStDiTConfig};

/// The two fixed training scenes: a cut-in and a sudden brake, one forward
/// camera at 224x128 so the latent video is 8 x 16x28 x 4.
pub fn overfit_batch() -> (Vec<Sample>, ToyStDiTConfig) {
    let rig = RigSpec { count: 1, width: 224, height: 128, hfov_deg: 70.0 };
    let cut_in = ScenarioSpec {
        frames: 8,
        cameras: rig,
        actors: vec![ActorSpec { lane: 0, speed: 11.0, start: 10.0, ..Default::default() }],
        ego: ActorSpec { lane: 1, speed: 8.0, start: 0.0, ..Default::default() },
        events: vec![EventSpec { kind: EventKind::CutIn, actor: 0, start: 2, duration: 4, magnitude: 3.5 }],
        weather: "Sunny".into(),
        ..Default::default()
    };
    let brake = ScenarioSpec {
        frames: 8,
        cameras: rig,
        actors: vec![ActorSpec { lane: 1, speed: 12.0, start: 18.0, ..Default::default() }],
        ego: ActorSpec { lane: 1, speed: 9.0, start: 0.0, ..Default::default() },
        events: vec![EventSpec { kind: EventKind::SuddenBrake, actor: 0, start: 3, duration: 4, magnitude: 6.0 }],
        weather: "Rainy".into(),
        time_of_day: "Night".into(),
        ..Default::default()
    };

    let config = ToyStDiTConfig {
        d_model: 32,
        num_base_blocks: 2,
        num_control_blocks: 1,
        patch: 2,
        diffusion_steps: 50,
        seed: 42,
        depth_encoder: DepthEncoderConfig {
            d_model: 32,
            fourier: FourierSpec { num_bands: 2, base: 2.0, include_input: true },
            z_max: 80.0,
            residual: true,
        },
        ..Default::default()
    };

    let opts = RenderOptions::default();
    let batch = vec![
        build_sample(&build_scenario(&cut_in, 100).unwrap(), 0, &opts, &config.depth_encoder).unwrap(),
        build_sample(&build_scenario(&brake, 200).unwrap(), 0, &opts, &config.depth_encoder).unwrap(),
    ];
    (batch, config)
}

fn main() {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(120);
    let lr: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1e-2);

    let (batch, config) = overfit_batch();
    let schedule = NoiseSchedule::new(&config.noise_schedule, config.diffusion_steps).unwrap();
    let mut model = ToyStDiT::new(config).unwrap();
    println!(
        "training {} params for {steps} steps at lr {lr}",
        model.params.total_elements()
    );

    let start = std::time::Instant::now();
    let losses = train_loop(&mut model, &schedule, &batch, steps, lr, 0).unwrap();
    for (i, l) in losses.iter().enumerate() {
        if i % 20 == 0 || i + 1 == losses.len() {
            println!("step {i:4}  loss {l:.6}");
        }
    }
    println!(
        "done in {:.1}s: step-0 loss {:.6}, final {:.6} ({:.1}%)",
        start.elapsed().as_secs_f64(),
        losses[0],
        losses[losses.len() - 1],
        100.0 * losses[losses.len() - 1] / losses[0]
    );
}
