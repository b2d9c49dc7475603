//! Tracks an instance through an occlusion gap: visible, hidden for two
//! frames, visible again. The flow offset at reappearance spans the whole
//! gap, re-associating the instance with its pre-occlusion state. Also
//! rasterizes the motion map and writes its RGB visualization.

use instaflow::flow::{flow_offset, last_visible, offset_map, rasterize_motion_map, flow_to_rgb};
use instaflow::math::Vec3;
use instaflow::scene::{
    Box3D, Camera, CameraIntrinsics, Frame, RigidPose, SceneSequence, TrackedInstanceFrame,
};

fn main() {
    let k = CameraIntrinsics {
        fx: 200.0,
        fy: 200.0,
        cx: 112.0,
        cy: 64.0,
        width: 224,
        height: 128,
    };
    let visibility = [true, false, false, true];
    let frames = visibility
        .iter()
        .enumerate()
        .map(|(t, &visible)| Frame {
            ego_pose: RigidPose::IDENTITY,
            cameras: vec![Camera { pose: RigidPose::IDENTITY, intrinsics: k }],
            instances: vec![TrackedInstanceFrame {
                track_id: 1,
                visible,
                box3d: Box3D {
                    center: Vec3::new(2.0 * t as f64 - 3.0, 0.3 * t as f64, 14.0),
                    size: [4.5, 1.9, 1.7],
                    yaw: 0.0,
                    class_id: 0,
                    track_id: 1,
                },
            }],
            prompt: String::new(),
        })
        .collect();
    let scene = SceneSequence { frames, lanes: vec![] };

    println!("visibility: {visibility:?}");
    for t in 0..scene.len() {
        let lv = last_visible(&scene, 1, t).unwrap();
        let off = flow_offset(&scene, 1, t).unwrap();
        println!(
            "frame {t}: last visible {:?}, offset ({:+.1}, {:+.1}, {:+.1})",
            lv, off.dx, off.dy, off.dz
        );
    }
    println!("\nframe 3 spans the occlusion gap: 3 frames of motion in one offset");
    println!("offset map at t=3: {:?}", offset_map(&scene, 3).unwrap());

    let map = rasterize_motion_map(&scene, 0, 3).unwrap();
    let nonzero = map.data.chunks_exact(3).filter(|v| **v != [0.0, 0.0, 0.0]).count();
    println!("\nmotion map at t=3: {nonzero} pixels carry the offset, rest are zero");

    let img = flow_to_rgb(&map, 10.0);
    img.image.write_ppm(std::path::Path::new("motion_flow.ppm")).unwrap();
    map.write_binary(std::path::Path::new("motion_map.bin")).unwrap();
    println!("wrote motion_flow.ppm and motion_map.bin");
}
