//! World -> ego -> camera -> image coordinate chain, relative depth
//! ordering, and occlusion-aware layout rasterization.
//!
//! The chain is p_ego = R_e^T (p_world - T_e), p_cam = R_s^T (p_ego - T_s),
//! then the pinhole projection u = fx x/z + cx, v = fy y/z + cy with
//! z_c = z kept as the per-corner depth. Corners with z_c <= EPS_Z are
//! excluded from the image-plane footprint instead of being clipped.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::img::Image8;
use crate::math::Vec3;
use crate::scene::{box_corners, Box3D, CameraIntrinsics, RigidPose, BOX_CORNERS};

/// Minimum forward distance (meters) for a point to count as in front of
/// the camera.
pub const EPS_Z: f64 = 1e-6;

/// Transforms a world-frame point into the ego vehicle frame.
pub fn world_to_ego(p: Vec3, ego: &RigidPose) -> Vec3 {
    ego.rotation.transpose().mul_vec(p - ego.translation)
}

/// Transforms an ego-frame point into the camera frame.
pub fn ego_to_camera(p: Vec3, cam: &RigidPose) -> Vec3 {
    cam.rotation.transpose().mul_vec(p - cam.translation)
}

/// Inverse of [`world_to_ego`].
pub fn ego_to_world(p: Vec3, ego: &RigidPose) -> Vec3 {
    ego.rotation.mul_vec(p) + ego.translation
}

/// Inverse of [`ego_to_camera`].
pub fn camera_to_ego(p: Vec3, cam: &RigidPose) -> Vec3 {
    cam.rotation.mul_vec(p) + cam.translation
}

/// Pinhole projection of a camera-frame point. Fails for points at or
/// behind the image plane; the caller decides the clipping policy.
pub fn camera_to_image(p: Vec3, k: &CameraIntrinsics) -> Result<(f64, f64, f64)> {
    if p.z <= EPS_Z {
        return Err(Error::BehindCamera { z: p.z });
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    Ok((u, v, p.z))
}

/// Recovers the camera-frame point from pixel coordinates and depth.
pub fn image_to_camera(u: f64, v: f64, z: f64, k: &CameraIntrinsics) -> Vec3 {
    Vec3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z)
}

/// A 3D box carried through the projection chain. Depth values are kept
/// unclipped for all eight corners; image coordinates exist only for the
/// corners in front of the camera.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedBox {
    pub track_id: u64,
    pub class_id: u32,
    /// Image-plane corner positions; `None` for corners behind the camera.
    pub uv: [Option<[f64; 2]>; BOX_CORNERS],
    /// Per-corner depth along the optical axis, unclipped.
    pub depth: [f64; BOX_CORNERS],
    /// Number of corners with depth <= EPS_Z.
    pub behind_count: usize,
}

impl ProjectedBox {
    /// Smallest depth over the corners in front of the camera; `None` when
    /// the box is fully behind.
    pub fn representative_depth(&self) -> Option<f64> {
        self.depth
            .iter()
            .zip(self.uv.iter())
            .filter(|(_, uv)| uv.is_some())
            .map(|(d, _)| *d)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))))
    }

    pub fn fully_behind(&self) -> bool {
        self.behind_count == BOX_CORNERS
    }

    /// Corners that survived the behind-camera cut.
    pub fn visible_uv(&self) -> Vec<[f64; 2]> {
        self.uv.iter().flatten().copied().collect()
    }
}

/// Projects all eight corners of `box3d` through the full chain.
pub fn project_box(
    box3d: &Box3D,
    ego: &RigidPose,
    cam: &RigidPose,
    k: &CameraIntrinsics,
) -> ProjectedBox {
    let mut uv = [None; BOX_CORNERS];
    let mut depth = [0.0; BOX_CORNERS];
    let mut behind_count = 0;
    for (i, corner) in box_corners(box3d).iter().enumerate() {
        let p_cam = ego_to_camera(world_to_ego(*corner, ego), cam);
        depth[i] = p_cam.z;
        match camera_to_image(p_cam, k) {
            Ok((u, v, _)) => uv[i] = Some([u, v]),
            Err(_) => behind_count += 1,
        }
    }
    ProjectedBox {
        track_id: box3d.track_id,
        class_id: box3d.class_id,
        uv,
        depth,
        behind_count,
    }
}

/// Sorts box indices by representative depth ascending (nearest first).
/// Ties break by track_id ascending; fully-behind boxes go last, ordered
/// by track_id among themselves.
pub fn depth_order(boxes: &[ProjectedBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    idx.sort_by(|&a, &b| {
        let pb_a = &boxes[a];
        let pb_b = &boxes[b];
        match (pb_a.representative_depth(), pb_b.representative_depth()) {
            (Some(da), Some(db)) => da
                .partial_cmp(&db)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(pb_a.track_id.cmp(&pb_b.track_id)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => pb_a.track_id.cmp(&pb_b.track_id),
        }
    });
    idx
}

// ---------------------------------------------------------------------------
// Class palette
// ---------------------------------------------------------------------------

/// Fixed 16-entry class palette (see docs/formats.md). Class ids beyond 15
/// wrap around.
pub const CLASS_PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

/// Reserved color for lane overlays; deliberately outside the class palette.
pub const LANE_COLOR: [u8; 3] = [255, 255, 255];

pub fn class_color(class_id: u32, palette: &[[u8; 3]; 16]) -> [u8; 3] {
    palette[(class_id as usize) % palette.len()]
}

// ---------------------------------------------------------------------------
// Convex hull and fill
// ---------------------------------------------------------------------------

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew monotone-chain convex hull, counter-clockwise in (u, v) axes.
/// Collinear points on the hull boundary are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * n);
    for &p in &pts {
        while hull.len() >= 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Calls `plot(x, y)` for every pixel whose center (x+0.5, y+0.5) lies in
/// the hull, scanning row spans. Hulls with fewer than 3 vertices have no
/// area and produce no pixels.
pub fn fill_convex(hull: &[[f64; 2]], width: u32, height: u32, mut plot: impl FnMut(u32, u32)) {
    if hull.len() < 3 {
        return;
    }
    let v_min = hull.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let v_max = hull.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let y_start = ((v_min - 0.5).ceil().max(0.0)) as i64;
    let y_end = ((v_max - 0.5).floor().min(height as f64 - 1.0)) as i64;
    for y in y_start..=y_end {
        let yc = y as f64 + 0.5;
        let mut x_enter = f64::INFINITY;
        let mut x_exit = f64::NEG_INFINITY;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let (lo, hi) = if a[1] <= b[1] { (a, b) } else { (b, a) };
            if yc < lo[1] || yc > hi[1] {
                continue;
            }
            if hi[1] == lo[1] {
                x_enter = x_enter.min(lo[0].min(hi[0]));
                x_exit = x_exit.max(lo[0].max(hi[0]));
            } else {
                let x = lo[0] + (yc - lo[1]) * (hi[0] - lo[0]) / (hi[1] - lo[1]);
                x_enter = x_enter.min(x);
                x_exit = x_exit.max(x);
            }
        }
        if x_enter > x_exit {
            continue;
        }
        let x_start = ((x_enter - 0.5).ceil().max(0.0)) as i64;
        let x_end = ((x_exit - 0.5).floor().min(width as f64 - 1.0)) as i64;
        for x in x_start..=x_end {
            plot(x as u32, y as u32);
        }
    }
}

/// 1-px line from `a` to `b` in pixel coordinates (DDA stepping).
pub fn draw_line(img: &mut Image8, a: [f64; 2], b: [f64; 2], rgb: [u8; 3]) {
    let du = b[0] - a[0];
    let dv = b[1] - a[1];
    let steps = du.abs().max(dv.abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let u = a[0] + t * du;
        let v = a[1] + t * dv;
        let x = u.round();
        let y = v.round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width && (y as u32) < img.height {
            img.put(x as u32, y as u32, rgb);
        }
    }
}

// ---------------------------------------------------------------------------
// Layout rasterization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxStyle {
    /// Filled convex hull of the in-front corners.
    Filled,
    /// The twelve box edges; an edge is drawn only when both endpoints are
    /// in front of the camera.
    Wireframe,
}

/// Edge list of the fixed corner ordering: bottom ring, top ring, pillars.
const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Paints projected boxes back-to-front following `order` (the permutation
/// from [`depth_order`]), so the final color at every pixel belongs to the
/// nearest covering instance.
pub fn rasterize_layout(
    boxes: &[ProjectedBox],
    order: &[usize],
    width: u32,
    height: u32,
    palette: &[[u8; 3]; 16],
    style: BoxStyle,
) -> Image8 {
    let mut img = Image8::new(width, height);
    for &i in order.iter().rev() {
        let pb = &boxes[i];
        if pb.fully_behind() {
            continue;
        }
        let rgb = class_color(pb.class_id, palette);
        match style {
            BoxStyle::Filled => {
                let hull = convex_hull(&pb.visible_uv());
                fill_convex(&hull, width, height, |x, y| img.put(x, y, rgb));
            }
            BoxStyle::Wireframe => {
                for &(a, b) in &BOX_EDGES {
                    if let (Some(pa), Some(pb2)) = (pb.uv[a], pb.uv[b]) {
                        draw_line(&mut img, pa, pb2, rgb);
                    }
                }
            }
        }
    }
    img
}

/// Projects world-frame polylines and draws 1-px segments between
/// consecutive in-front vertices in the reserved lane color.
pub fn rasterize_lanes(
    img: &mut Image8,
    polylines: &[Vec<Vec3>],
    ego: &RigidPose,
    cam: &RigidPose,
    k: &CameraIntrinsics,
) {
    for line in polylines {
        let projected: Vec<Option<[f64; 2]>> = line
            .iter()
            .map(|&p| {
                let p_cam = ego_to_camera(world_to_ego(p, ego), cam);
                camera_to_image(p_cam, k).ok().map(|(u, v, _)| [u, v])
            })
            .collect();
        for pair in projected.windows(2) {
            if let (Some(a), Some(b)) = (pair[0], pair[1]) {
                draw_line(img, a, b, LANE_COLOR);
            }
        }
    }
}
