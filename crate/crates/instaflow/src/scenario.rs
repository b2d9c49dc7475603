//! Simulator-free procedural scenario generator: straight multi-lane road,
//! constant-velocity lane following with seeded jitter, cut-in and
//! sudden-brake events, emitted as scene sequences whose visibility flags
//! come from the projection module.
//!
//! Scene diversity comes from seeds, lane counts, speeds, and event
//! parameters; determinism is the contract — identical (spec, seed) pairs
//! emit byte-identical JSON.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{wrap_angle, Mat3, Vec3};
use crate::projection::{project_box, EPS_Z};
use crate::scene::{
    Box3D, Camera, CameraIntrinsics, Frame, RigidPose, SceneSequence, TrackedInstanceFrame,
};

/// Hard cap on lateral waypoint jitter, meters.
pub const MAX_JITTER: f64 = 0.1;

/// Straight multi-lane road along +x. Lane 0 sits at the most negative y;
/// lane centers are spaced by `lane_width` and centered about y = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSpec {
    pub lane_count: usize,
    pub lane_width: f64,
    pub lane_length: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec { lane_count: 3, lane_width: 3.5, lane_length: 200.0 }
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lane_count == 0 {
            return Err(Error::InvalidConfig("lane_count must be >= 1".into()));
        }
        if self.lane_width <= 0.0 || self.lane_length <= 0.0 {
            return Err(Error::InvalidConfig("lane dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn lane_center_y(&self, lane: usize) -> f64 {
        (lane as f64 - (self.lane_count as f64 - 1.0) / 2.0) * self.lane_width
    }

    /// Lane-center polylines in the world frame, sampled every few meters
    /// so per-vertex behind-camera culling stays close to true clipping.
    pub fn lane_polylines(&self) -> Vec<Vec<Vec3>> {
        const STEP: f64 = 5.0;
        let n = (self.lane_length / STEP).ceil() as usize;
        (0..self.lane_count)
            .map(|l| {
                let y = self.lane_center_y(l);
                (0..=n)
                    .map(|i| Vec3::new((i as f64 * STEP).min(self.lane_length), y, 0.0))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CutIn,
    SuddenBrake,
    None,
}

/// A scripted interaction applied to one actor's trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub kind: EventKind,
    pub actor: usize,
    pub start: usize,
    pub duration: usize,
    /// Lateral offset in meters (cut_in) or deceleration in m/s^2
    /// (sudden_brake).
    pub magnitude: f64,
}

impl EventSpec {
    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.start + self.duration > frames {
            return Err(Error::EventWindow {
                start: self.start,
                duration: self.duration,
                len: frames,
            });
        }
        if self.kind != EventKind::None && self.magnitude <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "event magnitude must be positive, got {}",
                self.magnitude
            )));
        }
        Ok(())
    }
}

/// Lane-following waypoints for one actor: constant speed along +x with
/// per-frame lateral jitter drawn uniformly from [-jitter, jitter].
#[allow(clippy::too_many_arguments)]
pub fn lane_waypoints(
    map: &MapSpec,
    lane: usize,
    speed: f64,
    start_x: f64,
    frames: usize,
    dt: f64,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec3> {
    let y = map.lane_center_y(lane % map.lane_count.max(1));
    (0..frames)
        .map(|f| {
            let dy = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            Vec3::new(start_x + speed * f as f64 * dt, y + dy, 0.0)
        })
        .collect()
}

/// One trajectory per actor; actor i follows lane i mod lane_count from
/// x = 0. Deterministic for a fixed rng seed.
pub fn gen_waypoints(
    map: &MapSpec,
    speeds: &[f64],
    frames: usize,
    dt: f64,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Vec3>>> {
    map.validate()?;
    if frames < 2 {
        return Err(Error::InvalidConfig("need at least 2 frames".into()));
    }
    if speeds.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidConfig("actor speeds must be positive".into()));
    }
    if !(0.0..=MAX_JITTER).contains(&jitter) {
        return Err(Error::InvalidConfig(format!(
            "jitter must lie in [0, {MAX_JITTER}], got {jitter}"
        )));
    }
    Ok(speeds
        .iter()
        .enumerate()
        .map(|(i, &speed)| lane_waypoints(map, i, speed, 0.0, frames, dt, jitter, rng))
        .collect())
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Applies one event to a trajectory. Cut-in adds a C1-continuous
/// smoothstep lateral displacement reaching `magnitude` after `duration`
/// frames and holding it. Sudden-brake reduces the longitudinal speed by
/// magnitude*dt per in-window step, floored at zero, and re-integrates the
/// positions; the braked speed persists after the window.
pub fn apply_event(traj: &[Vec3], event: &EventSpec, dt: f64) -> Result<Vec<Vec3>> {
    event.validate(traj.len())?;
    let mut out = traj.to_vec();
    match event.kind {
        EventKind::None => {}
        EventKind::CutIn => {
            for (f, p) in out.iter_mut().enumerate() {
                if f < event.start || event.duration == 0 {
                    continue;
                }
                let progress = (f - event.start) as f64 / event.duration as f64;
                p.y += event.magnitude * smoothstep(progress);
            }
        }
        EventKind::SuddenBrake => {
            let mut speed = if event.start + 1 < traj.len() {
                (traj[event.start + 1].x - traj[event.start].x) / dt
            } else {
                0.0
            };
            for f in event.start..out.len() - 1 {
                if f < event.start + event.duration {
                    speed = (speed - event.magnitude * dt).max(0.0);
                }
                out[f + 1].x = out[f].x + speed * dt;
            }
        }
    }
    Ok(out)
}

/// Whether any corner of the box projects inside any camera image with a
/// positive optical-axis depth.
pub fn instance_visible(box3d: &Box3D, ego: &RigidPose, cameras: &[Camera]) -> bool {
    cameras.iter().any(|cam| {
        let pb = project_box(box3d, ego, &cam.pose, &cam.intrinsics);
        pb.uv.iter().zip(pb.depth.iter()).any(|(uv, &z)| {
            if let Some([u, v]) = uv {
                z > EPS_Z
                    && *u >= 0.0
                    && *u < cam.intrinsics.width as f64
                    && *v >= 0.0
                    && *v < cam.intrinsics.height as f64
            } else {
                false
            }
        })
    })
}

/// Per-actor box geometry used at emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActorShape {
    pub size: [f64; 3],
    pub class_id: u32,
}

impl Default for ActorShape {
    fn default() -> Self {
        ActorShape { size: [4.5, 1.9, 1.7], class_id: 0 }
    }
}

/// Headings from consecutive displacements; zero-length steps carry the
/// previous heading so stopped actors keep their orientation.
fn headings(traj: &[Vec3]) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut prev = 0.0;
    for f in 0..traj.len() {
        let (a, b) = if f + 1 < traj.len() {
            (traj[f], traj[f + 1])
        } else if traj.len() >= 2 {
            (traj[f - 1], traj[f])
        } else {
            out[f] = prev;
            continue;
        };
        let d = b - a;
        if d.x.abs() + d.y.abs() > 1e-9 {
            prev = wrap_angle(d.y.atan2(d.x));
        }
        out[f] = prev;
    }
    out
}

/// Builds a scene from trajectories: boxes oriented along instantaneous
/// heading, visibility flags from the projection chain, lane polylines
/// attached for road-map rendering.
pub fn emit_scene(
    map: &MapSpec,
    trajectories: &[Vec<Vec3>],
    shapes: &[ActorShape],
    ego_trajectory: &[Vec3],
    rig: &[Camera],
    prompt: &str,
) -> Result<SceneSequence> {
    let frames = ego_trajectory.len();
    if trajectories.iter().any(|t| t.len() != frames) {
        return Err(Error::shape(
            "emit_scene",
            format!("{frames} frames per trajectory"),
            "mismatched lengths",
        ));
    }
    let ego_yaw = headings(ego_trajectory);
    let actor_yaw: Vec<Vec<f64>> = trajectories.iter().map(|t| headings(t)).collect();

    let mut scene = SceneSequence {
        frames: Vec::with_capacity(frames),
        lanes: map.lane_polylines(),
    };
    for f in 0..frames {
        let ego_pose = RigidPose::yaw_at(ego_trajectory[f], ego_yaw[f]);
        let mut instances = Vec::with_capacity(trajectories.len());
        for (i, traj) in trajectories.iter().enumerate() {
            let shape = shapes.get(i).copied().unwrap_or_default();
            let box3d = Box3D {
                center: traj[f] + Vec3::new(0.0, 0.0, shape.size[2] / 2.0),
                size: shape.size,
                yaw: actor_yaw[i][f],
                class_id: shape.class_id,
                track_id: i as u64 + 1,
            };
            let visible = instance_visible(&box3d, &ego_pose, rig);
            instances.push(TrackedInstanceFrame {
                track_id: box3d.track_id,
                box3d,
                visible,
            });
        }
        scene.frames.push(Frame {
            ego_pose,
            cameras: rig.to_vec(),
            instances,
            prompt: prompt.to_string(),
        });
    }
    Ok(scene)
}

/// Surround rig: `count` cameras at equal yaw increments sharing pinhole
/// intrinsics derived from the horizontal field of view, mounted 1.6 m
/// above the ego origin. Camera frames are z-forward, x-right, y-down.
pub fn camera_rig(count: usize, width: u32, height: u32, hfov_deg: f64) -> Vec<Camera> {
    let fx = width as f64 / 2.0 / (hfov_deg.to_radians() / 2.0).tan();
    let intrinsics = CameraIntrinsics {
        fx,
        fy: fx,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    };
    (0..count)
        .map(|i| {
            let yaw = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            let (s, c) = yaw.sin_cos();
            // Optical axis along the ego direction rotated by yaw.
            let z_axis = Vec3::new(c, s, 0.0);
            let x_axis = Vec3::new(s, -c, 0.0);
            let y_axis = Vec3::new(0.0, 0.0, -1.0);
            Camera {
                pose: RigidPose::new(
                    Mat3::from_cols(x_axis, y_axis, z_axis),
                    Vec3::new(0.0, 0.0, 1.6),
                ),
                intrinsics,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scenario spec (the CLI input format)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActorSpec {
    pub lane: usize,
    pub speed: f64,
    pub start: f64,
    pub shape: ActorShape,
}

impl Default for ActorSpec {
    fn default() -> Self {
        ActorSpec { lane: 0, speed: 10.0, start: 10.0, shape: ActorShape::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSpec {
    pub count: usize,
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec { count: 6, width: 448, height: 256, hfov_deg: 70.0 }
    }
}

/// Complete scenario description; every field has a default so a spec file
/// can state only what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub map: MapSpec,
    pub frames: usize,
    pub dt: f64,
    pub jitter: f64,
    pub ego: ActorSpec,
    pub actors: Vec<ActorSpec>,
    pub events: Vec<EventSpec>,
    pub weather: String,
    pub time_of_day: String,
    pub prompt_template: String,
    pub cameras: RigSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            map: MapSpec::default(),
            frames: 8,
            dt: 0.5,
            jitter: 0.0,
            ego: ActorSpec { lane: 1, speed: 8.0, start: 0.0, ..Default::default() },
            actors: vec![
                ActorSpec { lane: 0, speed: 10.0, start: 8.0, ..Default::default() },
                ActorSpec { lane: 2, speed: 9.0, start: 14.0, ..Default::default() },
            ],
            events: vec![],
            weather: "Sunny".into(),
            time_of_day: "Day".into(),
            prompt_template: "A {weather} {time} drive on a straight {lanes}-lane road.".into(),
            cameras: RigSpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn prompt(&self) -> String {
        self.prompt_template
            .replace("{weather}", &self.weather)
            .replace("{time}", &self.time_of_day)
            .replace("{lanes}", &self.map.lane_count.to_string())
    }
}

/// Generates the scene for (spec, seed): waypoints, events, emission.
pub fn build_scenario(spec: &ScenarioSpec, seed: u64) -> Result<SceneSequence> {
    spec.map.validate()?;
    if spec.frames < 2 {
        return Err(Error::InvalidConfig("scenario needs at least 2 frames".into()));
    }
    if !(0.0..=MAX_JITTER).contains(&spec.jitter) {
        return Err(Error::InvalidConfig(format!(
            "jitter must lie in [0, {MAX_JITTER}], got {}",
            spec.jitter
        )));
    }
    for ev in &spec.events {
        ev.validate(spec.frames)?;
        if ev.actor >= spec.actors.len() {
            return Err(Error::InvalidConfig(format!(
                "event targets actor {} but only {} exist",
                ev.actor,
                spec.actors.len()
            )));
        }
    }

    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut trajectories: Vec<Vec<Vec3>> = spec
        .actors
        .iter()
        .map(|a| {
            lane_waypoints(&spec.map, a.lane, a.speed, a.start, spec.frames, spec.dt, spec.jitter, &mut rng)
        })
        .collect();
    for ev in &spec.events {
        trajectories[ev.actor] = apply_event(&trajectories[ev.actor], ev, spec.dt)?;
    }
    let ego = lane_waypoints(
        &spec.map,
        spec.ego.lane,
        spec.ego.speed,
        spec.ego.start,
        spec.frames,
        spec.dt,
        0.0,
        &mut rng,
    );
    let shapes: Vec<ActorShape> = spec.actors.iter().map(|a| a.shape).collect();
    let rig = camera_rig(
        spec.cameras.count,
        spec.cameras.width,
        spec.cameras.height,
        spec.cameras.hfov_deg,
    );
    emit_scene(&spec.map, &trajectories, &shapes, &ego, &rig, &spec.prompt())
}
