//! Scene-to-condition rendering and training-sample assembly: the glue
//! between the geometric pipeline and the toy diffusion model.
//!
//! For one camera, every frame yields a flow visualization, a depth-ordered
//! box layout, and a lane overlay. The mock autoencoder compresses each
//! into a latent; the training target is the latent of the composite
//! render (lanes under boxes), which is a deterministic function of the
//! scene.

use crate::depth::{normalized_corner_rows, DepthEncoderConfig};
use crate::error::{Error, Result};
use crate::flow::{flow_to_rgb, rasterize_motion_map, FlowImage};
use crate::img::Image8;
use crate::latent::{encode_image_latent, LatentTensor};
use crate::projection::{
    depth_order, project_box, rasterize_lanes, rasterize_layout, BoxStyle, ProjectedBox,
    CLASS_PALETTE,
};
use crate::scene::{SceneSequence, BOX_CORNERS};
use crate::stdit::{CondInputs, Sample};

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub flow_range: f64,
    pub style: BoxStyle,
    pub palette: [[u8; 3]; 16],
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            flow_range: 10.0,
            style: BoxStyle::Filled,
            palette: CLASS_PALETTE,
        }
    }
}

fn camera_checked(scene: &SceneSequence, camera: usize, t: usize) -> Result<&crate::scene::Camera> {
    let frame = scene
        .frames
        .get(t)
        .ok_or(Error::FrameOutOfRange { frame: t, len: scene.len() })?;
    frame.cameras.get(camera).ok_or(Error::CameraOutOfRange {
        camera,
        len: frame.cameras.len(),
    })
}

/// Projected boxes of the visible instances in frame `t`, track-id order.
pub fn visible_projected_boxes(
    scene: &SceneSequence,
    camera: usize,
    t: usize,
) -> Result<Vec<ProjectedBox>> {
    let cam = camera_checked(scene, camera, t)?;
    let frame = &scene.frames[t];
    let mut instances: Vec<_> = frame.instances.iter().filter(|i| i.visible).collect();
    instances.sort_by_key(|i| i.track_id);
    Ok(instances
        .iter()
        .map(|i| project_box(&i.box3d, &frame.ego_pose, &cam.pose, &cam.intrinsics))
        .collect())
}

/// RGB flow visualization of the frame's motion map.
pub fn render_flow(scene: &SceneSequence, camera: usize, t: usize, range: f64) -> Result<FlowImage> {
    let map = rasterize_motion_map(scene, camera, t)?;
    Ok(flow_to_rgb(&map, range))
}

/// Depth-ordered box layout (no lanes).
pub fn render_layout(
    scene: &SceneSequence,
    camera: usize,
    t: usize,
    opts: &RenderOptions,
) -> Result<Image8> {
    let cam = camera_checked(scene, camera, t)?;
    let k = cam.intrinsics;
    let boxes = visible_projected_boxes(scene, camera, t)?;
    let order = depth_order(&boxes);
    Ok(rasterize_layout(&boxes, &order, k.width, k.height, &opts.palette, opts.style))
}

/// Lane polylines only, on black.
pub fn render_lanes(scene: &SceneSequence, camera: usize, t: usize) -> Result<Image8> {
    let cam = camera_checked(scene, camera, t)?;
    let frame = &scene.frames[t];
    let mut img = Image8::new(cam.intrinsics.width, cam.intrinsics.height);
    rasterize_lanes(&mut img, &scene.lanes, &frame.ego_pose, &cam.pose, &cam.intrinsics);
    Ok(img)
}

/// Composite target render: lanes first, boxes painted over them.
pub fn render_composite(
    scene: &SceneSequence,
    camera: usize,
    t: usize,
    opts: &RenderOptions,
) -> Result<Image8> {
    let cam = camera_checked(scene, camera, t)?;
    let k = cam.intrinsics;
    let frame = &scene.frames[t];
    let mut img = Image8::new(k.width, k.height);
    rasterize_lanes(&mut img, &scene.lanes, &frame.ego_pose, &cam.pose, &k);
    let boxes = visible_projected_boxes(scene, camera, t)?;
    let order = depth_order(&boxes);
    let over = rasterize_layout(&boxes, &order, k.width, k.height, &opts.palette, opts.style);
    for (dst, src) in img.data.chunks_exact_mut(3).zip(over.data.chunks_exact(3)) {
        if src != [0, 0, 0] {
            dst.copy_from_slice(src);
        }
    }
    Ok(img)
}

/// Normalized corner rows of the visible instances in frame `t`, the depth
/// encoder's per-frame input.
pub fn frame_depth_rows(
    scene: &SceneSequence,
    camera: usize,
    t: usize,
    cfg: &DepthEncoderConfig,
) -> Result<Vec<[[f64; 3]; BOX_CORNERS]>> {
    let cam = camera_checked(scene, camera, t)?;
    let boxes = visible_projected_boxes(scene, camera, t)?;
    Ok(boxes
        .iter()
        .map(|pb| normalized_corner_rows(pb, &cam.intrinsics, cfg.z_max))
        .collect())
}

/// Stacks per-frame image latents along time.
fn encode_frames(images: &[Image8]) -> Result<LatentTensor> {
    let frames: Vec<LatentTensor> = images
        .iter()
        .map(encode_image_latent)
        .collect::<Result<_>>()?;
    LatentTensor::stack_frames(&frames)
}

/// Builds the full condition set for one camera.
pub fn build_conditions(
    scene: &SceneSequence,
    camera: usize,
    opts: &RenderOptions,
    depth_cfg: &DepthEncoderConfig,
) -> Result<CondInputs> {
    let t = scene.len();
    let mut flow_imgs = Vec::with_capacity(t);
    let mut layout_imgs = Vec::with_capacity(t);
    let mut lane_imgs = Vec::with_capacity(t);
    let mut boxes = Vec::with_capacity(t);
    for ti in 0..t {
        flow_imgs.push(render_flow(scene, camera, ti, opts.flow_range)?.image);
        layout_imgs.push(render_layout(scene, camera, ti, opts)?);
        lane_imgs.push(render_lanes(scene, camera, ti)?);
        boxes.push(frame_depth_rows(scene, camera, ti, depth_cfg)?);
    }
    Ok(CondInputs {
        motion: encode_frames(&flow_imgs)?,
        layout: encode_frames(&layout_imgs)?,
        lane: encode_frames(&lane_imgs)?,
        boxes,
    })
}

/// Encodes the composite render of every frame: the training target.
pub fn build_target(scene: &SceneSequence, camera: usize, opts: &RenderOptions) -> Result<LatentTensor> {
    let imgs: Vec<Image8> = (0..scene.len())
        .map(|ti| render_composite(scene, camera, ti, opts))
        .collect::<Result<_>>()?;
    encode_frames(&imgs)
}

/// Full training sample for one (scene, camera) pair.
pub fn build_sample(
    scene: &SceneSequence,
    camera: usize,
    opts: &RenderOptions,
    depth_cfg: &DepthEncoderConfig,
) -> Result<Sample> {
    if scene.is_empty() {
        return Err(Error::InvalidConfig("cannot build a sample from an empty scene".into()));
    }
    Ok(Sample {
        target: build_target(scene, camera, opts)?,
        conditions: build_conditions(scene, camera, opts, depth_cfg)?,
        prompt: scene.frames[0].prompt.clone(),
    })
}

/// Loads every `*.json` scene in a directory, sorted by file name for
/// deterministic ordering.
pub fn load_scene_dir(dir: &std::path::Path) -> Result<Vec<(String, SceneSequence)>> {
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    paths.sort();
    let mut scenes = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        let scene = SceneSequence::from_json(&text)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        scenes.push((name, scene));
    }
    Ok(scenes)
}
