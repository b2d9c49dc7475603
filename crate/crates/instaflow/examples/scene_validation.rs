//! Builds a scene, serializes it to JSON, and runs the validator — first
//! on the well-formed scene, then on two corrupted copies.

use instaflow::math::{Mat3, Vec3};
use instaflow::scenario::{build_scenario, ScenarioSpec};
use instaflow::scene::validate_scene;

fn main() {
    let scene = build_scenario(&ScenarioSpec::default(), 7).unwrap();
    println!(
        "generated scene: {} frames, {} cameras, {} instances in frame 0",
        scene.len(),
        scene.frames[0].cameras.len(),
        scene.frames[0].instances.len()
    );
    println!("JSON size: {} bytes", scene.to_json().len());
    print!("validation: {}", validate_scene(&scene));

    // Duplicate a track id.
    let mut broken = scene.clone();
    let copy = broken.frames[1].instances[0];
    broken.frames[1].instances.push(copy);
    print!("\nwith a duplicated track id:\n{}", validate_scene(&broken));

    // Scale a rotation so it is no longer orthonormal.
    let mut skewed = scene.clone();
    skewed.frames[0].ego_pose.rotation = Mat3::from_rows(
        [2.0, 0.0, 0.0],
        [0.0, 2.0, 0.0],
        [0.0, 0.0, 2.0],
    );
    skewed.frames[0].ego_pose.translation = Vec3::ZERO;
    print!("\nwith a scaled ego rotation:\n{}", validate_scene(&skewed));
}
