//! Renders a layout where a near car and a far bus overlap in the image:
//! the near instance must win the contested pixels. Writes filled and
//! wireframe variants as PPM files.

use instaflow::math::Vec3;
use instaflow::projection::{
    class_color, depth_order, project_box, rasterize_layout, BoxStyle, CLASS_PALETTE,
};
use instaflow::scene::{Box3D, CameraIntrinsics, RigidPose};

fn main() {
    let k = CameraIntrinsics {
        fx: 300.0,
        fy: 300.0,
        cx: 160.0,
        cy: 96.0,
        width: 320,
        height: 192,
    };
    let near_car = Box3D {
        center: Vec3::new(0.8, 0.2, 9.0),
        size: [4.5, 1.9, 1.7],
        yaw: 0.2,
        class_id: 0,
        track_id: 1,
    };
    let far_bus = Box3D {
        center: Vec3::new(-0.5, 0.0, 22.0),
        size: [11.0, 2.5, 3.2],
        yaw: -0.1,
        class_id: 3,
        track_id: 2,
    };
    let boxes = vec![
        project_box(&far_bus, &RigidPose::IDENTITY, &RigidPose::IDENTITY, &k),
        project_box(&near_car, &RigidPose::IDENTITY, &RigidPose::IDENTITY, &k),
    ];
    let order = depth_order(&boxes);
    println!(
        "depth order (nearest first): {:?}",
        order.iter().map(|&i| boxes[i].track_id).collect::<Vec<_>>()
    );

    let filled = rasterize_layout(&boxes, &order, k.width, k.height, &CLASS_PALETTE, BoxStyle::Filled);
    let car_color = class_color(0, &CLASS_PALETTE);
    let bus_color = class_color(3, &CLASS_PALETTE);
    let count = |rgb: [u8; 3]| filled.data.chunks_exact(3).filter(|px| *px == rgb).count();
    println!("car pixels: {}, bus pixels: {}", count(car_color), count(bus_color));
    println!("overlap center belongs to the car: {:?}", filled.get(190, 96) == car_color);

    let out = std::path::Path::new("layout_filled.ppm");
    filled.write_ppm(out).unwrap();
    let wire = rasterize_layout(&boxes, &order, k.width, k.height, &CLASS_PALETTE, BoxStyle::Wireframe);
    wire.write_ppm(std::path::Path::new("layout_wireframe.ppm")).unwrap();
    println!("wrote layout_filled.ppm and layout_wireframe.ppm");
}
