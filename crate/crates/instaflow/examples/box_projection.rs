//! Walks one 3D box through the full coordinate chain — world to ego to
//! camera to image plane — and prints the per-corner pixels and depths,
//! including a box straddling the image plane.

use instaflow::math::{Mat3, Vec3};
use instaflow::projection::project_box;
use instaflow::scene::{Box3D, CameraIntrinsics, RigidPose};

fn main() {
    let k = CameraIntrinsics {
        fx: 400.0,
        fy: 400.0,
        cx: 224.0,
        cy: 128.0,
        width: 448,
        height: 256,
    };
    // Ego heading 30 degrees left of world +x; camera looks along ego +x.
    let ego = RigidPose::new(Mat3::rot_z(0.5), Vec3::new(10.0, -2.0, 0.0));
    let cam = RigidPose::new(
        Mat3::from_cols(
            Vec3::new(0.0, -1.0, 0.0), // camera x = ego right
            Vec3::new(0.0, 0.0, -1.0), // camera y = down
            Vec3::new(1.0, 0.0, 0.0),  // optical axis = ego forward
        ),
        Vec3::new(0.0, 0.0, 1.6),
    );

    let car = Box3D {
        center: ego.rotation.mul_vec(Vec3::new(14.0, 1.2, 0.85)) + ego.translation,
        size: [4.5, 1.9, 1.7],
        yaw: 0.5,
        class_id: 0,
        track_id: 1,
    };
    let pb = project_box(&car, &ego, &cam, &k);
    println!("car 14 m ahead ({} corners behind):", pb.behind_count);
    for (i, (uv, z)) in pb.uv.iter().zip(pb.depth.iter()).enumerate() {
        match uv {
            Some([u, v]) => println!("  corner {i}: u {u:8.2}  v {v:8.2}  depth {z:6.2} m"),
            None => println!("  corner {i}: behind camera (depth {z:.2} m)"),
        }
    }
    println!("  representative depth: {:?}", pb.representative_depth());

    // A box half in front of, half behind the image plane.
    let straddling = Box3D {
        center: ego.rotation.mul_vec(Vec3::new(0.5, 0.0, 0.85)) + ego.translation,
        size: [4.5, 1.9, 1.7],
        yaw: 0.5,
        class_id: 1,
        track_id: 2,
    };
    let pb = project_box(&straddling, &ego, &cam, &k);
    println!("\nstraddling box: behind_count = {}", pb.behind_count);
    println!("as debug JSON:\n{}", serde_json::to_string_pretty(&pb).unwrap());
}
