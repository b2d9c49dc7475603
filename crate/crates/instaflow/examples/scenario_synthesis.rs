//! Generates two safety-critical scenarios — a cut-in and a sudden brake —
//! and prints how the events show up in trajectories and visibility flags.
//! Writes both scene JSONs next to the working directory.

use instaflow::scenario::{build_scenario, ActorSpec, EventKind, EventSpec, ScenarioSpec};

fn main() {
    let cut_in = ScenarioSpec {
        frames: 10,
        actors: vec![ActorSpec { lane: 0, speed: 11.0, start: 6.0, ..Default::default() }],
        ego: ActorSpec { lane: 1, speed: 9.0, start: 0.0, ..Default::default() },
        events: vec![EventSpec {
            kind: EventKind::CutIn,
            actor: 0,
            start: 3,
            duration: 4,
            magnitude: 3.5,
        }],
        weather: "Rainy".into(),
        time_of_day: "Night".into(),
        ..Default::default()
    };
    let scene = build_scenario(&cut_in, 21).unwrap();
    println!("prompt: {}", scene.frames[0].prompt);
    println!("cut-in lateral positions of actor 1:");
    for (t, frame) in scene.frames.iter().enumerate() {
        let b = frame.instances[0].box3d;
        println!(
            "  frame {t}: y {:+.2} m, yaw {:+.3} rad, visible {}",
            b.center.y, b.yaw, frame.instances[0].visible
        );
    }
    std::fs::write("scenario_cut_in.json", scene.to_json()).unwrap();

    let brake = ScenarioSpec {
        frames: 10,
        actors: vec![ActorSpec { lane: 1, speed: 12.0, start: 20.0, ..Default::default() }],
        ego: ActorSpec { lane: 1, speed: 9.0, start: 0.0, ..Default::default() },
        events: vec![EventSpec {
            kind: EventKind::SuddenBrake,
            actor: 0,
            start: 2,
            duration: 6,
            magnitude: 5.0,
        }],
        ..Default::default()
    };
    let scene = build_scenario(&brake, 22).unwrap();
    println!("\nsudden-brake longitudinal gap to ego:");
    for (t, frame) in scene.frames.iter().enumerate() {
        let gap = frame.instances[0].box3d.center.x - frame.ego_pose.translation.x;
        println!("  frame {t}: gap {gap:6.2} m");
    }
    std::fs::write("scenario_brake.json", scene.to_json()).unwrap();
    println!("\nwrote scenario_cut_in.json and scenario_brake.json");
}
