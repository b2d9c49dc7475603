//! Canonical in-memory scene representation shared by every other module.
//!
//! A scene is an ordered list of frames; each frame carries the ego pose, the
//! camera rig (pose + intrinsics per camera), the tracked instances with
//! their visibility flags, and a free-form text prompt. All angles are in
//! radians and all distances in meters.

use serde::{Deserialize, Serialize};

use crate::math::{Mat3, Vec3};

/// Pinhole intrinsics. `cx`/`cy` are the principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
    }
}

/// Rigid pose: rotation must be orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidPose {
    pub const IDENTITY: RigidPose = RigidPose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        RigidPose { rotation, translation }
    }

    /// Pose at `position` facing `yaw` radians about the world up-axis.
    pub fn yaw_at(position: Vec3, yaw: f64) -> Self {
        RigidPose {
            rotation: Mat3::rot_z(yaw),
            translation: position,
        }
    }

    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn rotation_is_orthonormal(&self) -> bool {
        self.rotation.orthonormality_defect() < Self::ORTHONORMAL_TOL && self.rotation.det() > 0.0
    }
}

/// Oriented 3D box. `size` is (length, width, height) along the box's local
/// x/y/z axes before the yaw rotation is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: Vec3,
    pub size: [f64; 3],
    pub yaw: f64,
    pub class_id: u32,
    pub track_id: u64,
}

/// Number of corners of a box; fixed by the corner-ordering contract below.
pub const BOX_CORNERS: usize = 8;

/// World-frame corners of `box3d` in the fixed documented order:
/// bottom face counter-clockwise viewed from above starting at
/// (+l/2, +w/2, -h/2) in the box frame, then the top face in the same
/// x/y order. Corner k and corner k+4 share their footprint.
pub fn box_corners(box3d: &Box3D) -> [Vec3; BOX_CORNERS] {
    let hl = box3d.size[0] / 2.0;
    let hw = box3d.size[1] / 2.0;
    let hh = box3d.size[2] / 2.0;
    // Bottom ring CCW from (+,+), then top ring.
    let footprint = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let rot = Mat3::rot_z(box3d.yaw);
    let mut out = [Vec3::ZERO; BOX_CORNERS];
    for (k, &(x, y)) in footprint.iter().enumerate() {
        let bottom = rot.mul_vec(Vec3::new(x, y, -hh)) + box3d.center;
        let top = rot.mul_vec(Vec3::new(x, y, hh)) + box3d.center;
        out[k] = bottom;
        out[k + 4] = top;
    }
    out
}

/// One tracked instance in one frame. When `visible` is false the box is
/// carried as metadata only and is excluded from all rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedInstanceFrame {
    pub track_id: u64,
    pub box3d: Box3D,
    pub visible: bool,
}

/// One camera of the rig: extrinsic pose relative to the ego vehicle plus
/// pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: RigidPose,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub ego_pose: RigidPose,
    pub cameras: Vec<Camera>,
    pub instances: Vec<TrackedInstanceFrame>,
    pub prompt: String,
}

/// Ordered frame sequence; frame index doubles as the timestamp order.
/// `lanes` carries optional world-frame lane polylines for road-map
/// rendering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneSequence {
    pub frames: Vec<Frame>,
    pub lanes: Vec<Vec<Vec3>>,
}

impl SceneSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Looks up the instance entry for `track_id` in frame `t`, if present.
    pub fn instance_at(&self, track_id: u64, t: usize) -> Option<&TrackedInstanceFrame> {
        self.frames
            .get(t)
            .and_then(|f| f.instances.iter().find(|i| i.track_id == track_id))
    }

    /// True if any frame mentions `track_id` (visible or not).
    pub fn has_track(&self, track_id: u64) -> bool {
        self.frames
            .iter()
            .any(|f| f.instances.iter().any(|i| i.track_id == track_id))
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    /// Frame the violation was found in; None for scene-level problems.
    pub frame: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn error(&mut self, frame: Option<usize>, message: String) {
        self.violations.push(Violation {
            severity: Severity::Error,
            frame,
            message,
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_clean() {
            return writeln!(f, "scene is well-formed");
        }
        for v in &self.violations {
            match v.frame {
                Some(t) => writeln!(f, "[{:?}] frame {}: {}", v.severity, t, v.message)?,
                None => writeln!(f, "[{:?}] scene: {}", v.severity, v.message)?,
            }
        }
        Ok(())
    }
}

/// Checks every structural invariant of a scene and returns the list of
/// violations; the report is empty iff the scene is well-formed.
pub fn validate_scene(scene: &SceneSequence) -> ValidationReport {
    let mut report = ValidationReport::default();

    if scene.frames.is_empty() {
        report.error(None, "scene has no frames".into());
        return report;
    }

    let rig_size = scene.frames[0].cameras.len();
    for (t, frame) in scene.frames.iter().enumerate() {
        if frame.cameras.len() != rig_size {
            report.error(
                Some(t),
                format!(
                    "camera rig cardinality {} differs from frame 0 ({})",
                    frame.cameras.len(),
                    rig_size
                ),
            );
        }

        if !frame.ego_pose.rotation_is_orthonormal() {
            report.error(
                Some(t),
                format!(
                    "ego rotation is not orthonormal (defect {:.3e})",
                    frame.ego_pose.rotation.orthonormality_defect()
                ),
            );
        }

        for (c, cam) in frame.cameras.iter().enumerate() {
            if !cam.pose.rotation_is_orthonormal() {
                report.error(
                    Some(t),
                    format!(
                        "camera {c} rotation is not orthonormal (defect {:.3e})",
                        cam.pose.rotation.orthonormality_defect()
                    ),
                );
            }
            if !cam.intrinsics.is_valid() {
                report.error(Some(t), format!("camera {c} intrinsics are invalid"));
            }
        }

        let mut seen = std::collections::BTreeSet::new();
        for inst in &frame.instances {
            if !seen.insert(inst.track_id) {
                report.error(
                    Some(t),
                    format!("duplicate track_id {} in frame", inst.track_id),
                );
            }
            if inst.box3d.size.iter().any(|&s| s <= 0.0) {
                report.error(
                    Some(t),
                    format!("track {} has non-positive box size", inst.track_id),
                );
            }
            if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&inst.box3d.yaw) {
                report.error(
                    Some(t),
                    format!("track {} yaw {} outside [-pi, pi)", inst.track_id, inst.box3d.yaw),
                );
            }
        }
    }

    report
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------
// The wire format stores rotations as 9 row-major doubles and vectors as
// 3-element arrays; see docs/formats.md.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseJson {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl From<&RigidPose> for PoseJson {
    fn from(p: &RigidPose) -> Self {
        PoseJson {
            rotation: p.rotation.m,
            translation: p.translation.to_array(),
        }
    }
}

impl From<PoseJson> for RigidPose {
    fn from(p: PoseJson) -> Self {
        RigidPose {
            rotation: Mat3::from_row_major(p.rotation),
            translation: Vec3::from_array(p.translation),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    rotation: [f64; 9],
    translation: [f64; 3],
    intrinsics: CameraIntrinsics,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceJson {
    track_id: u64,
    class_id: u32,
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    visible: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameJson {
    ego: PoseJson,
    cameras: Vec<CameraJson>,
    instances: Vec<InstanceJson>,
    prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneJson {
    frames: Vec<FrameJson>,
    /// World-frame lane polylines, one array of [x, y, z] per lane.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lanes: Vec<Vec<[f64; 3]>>,
}

impl SceneSequence {
    pub fn to_json(&self) -> String {
        let doc = SceneJson {
            frames: self
                .frames
                .iter()
                .map(|f| FrameJson {
                    ego: (&f.ego_pose).into(),
                    cameras: f
                        .cameras
                        .iter()
                        .map(|c| CameraJson {
                            rotation: c.pose.rotation.m,
                            translation: c.pose.translation.to_array(),
                            intrinsics: c.intrinsics,
                        })
                        .collect(),
                    instances: f
                        .instances
                        .iter()
                        .map(|i| InstanceJson {
                            track_id: i.track_id,
                            class_id: i.box3d.class_id,
                            center: i.box3d.center.to_array(),
                            size: i.box3d.size,
                            yaw: i.box3d.yaw,
                            visible: i.visible,
                        })
                        .collect(),
                    prompt: f.prompt.clone(),
                })
                .collect(),
            lanes: self
                .lanes
                .iter()
                .map(|line| line.iter().map(|v| v.to_array()).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("scene serialization cannot fail")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let doc: SceneJson = serde_json::from_str(text)?;
        Ok(SceneSequence {
            frames: doc
                .frames
                .into_iter()
                .map(|f| Frame {
                    ego_pose: f.ego.into(),
                    cameras: f
                        .cameras
                        .into_iter()
                        .map(|c| Camera {
                            pose: RigidPose {
                                rotation: Mat3::from_row_major(c.rotation),
                                translation: Vec3::from_array(c.translation),
                            },
                            intrinsics: c.intrinsics,
                        })
                        .collect(),
                    instances: f
                        .instances
                        .into_iter()
                        .map(|i| TrackedInstanceFrame {
                            track_id: i.track_id,
                            visible: i.visible,
                            box3d: Box3D {
                                center: Vec3::from_array(i.center),
                                size: i.size,
                                yaw: i.yaw,
                                class_id: i.class_id,
                                track_id: i.track_id,
                            },
                        })
                        .collect(),
                    prompt: f.prompt,
                })
                .collect(),
            lanes: doc
                .lanes
                .into_iter()
                .map(|line| line.into_iter().map(Vec3::from_array).collect())
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube(center: Vec3, yaw: f64) -> Box3D {
        Box3D {
            center,
            size: [2.0, 2.0, 2.0],
            yaw,
            class_id: 0,
            track_id: 1,
        }
    }

    #[test]
    fn corners_of_axis_aligned_cube() {
        let corners = box_corners(&unit_cube(Vec3::ZERO, 0.0));
        let expected = [
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
            [-1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0],
        ];
        for (c, e) in corners.iter().zip(expected.iter()) {
            assert!((*c - Vec3::from_array(*e)).abs_max() < 1e-15);
        }
    }

    #[test]
    fn corners_translate_with_center() {
        let base = box_corners(&unit_cube(Vec3::ZERO, 0.0));
        let shifted = box_corners(&unit_cube(Vec3::new(5.0, 0.0, 0.0), 0.0));
        for (b, s) in base.iter().zip(shifted.iter()) {
            assert!((*s - (*b + Vec3::new(5.0, 0.0, 0.0))).abs_max() < 1e-15);
        }
    }

    #[test]
    fn corner_rotated_by_quarter_turn() {
        // 4x2x2 box: corner (+l/2,+w/2,-h/2) = (2,1,-1) rotates to (-1,2,-1).
        let b = Box3D {
            center: Vec3::ZERO,
            size: [4.0, 2.0, 2.0],
            yaw: std::f64::consts::FRAC_PI_2,
            class_id: 0,
            track_id: 1,
        };
        let corners = box_corners(&b);
        assert!((corners[0] - Vec3::new(-1.0, 2.0, -1.0)).abs_max() < 1e-12);
    }

    #[test]
    fn corner_centroid_is_center() {
        let b = Box3D {
            center: Vec3::new(3.5, -2.0, 0.75),
            size: [4.2, 1.9, 1.6],
            yaw: 0.7,
            class_id: 2,
            track_id: 9,
        };
        let corners = box_corners(&b);
        let mut sum = Vec3::ZERO;
        for c in &corners {
            sum = sum + *c;
        }
        let centroid = sum * (1.0 / 8.0);
        assert!((centroid - b.center).abs_max() < 1e-12);
    }

    fn simple_frame() -> Frame {
        Frame {
            ego_pose: RigidPose::IDENTITY,
            cameras: vec![Camera {
                pose: RigidPose::IDENTITY,
                intrinsics: CameraIntrinsics {
                    fx: 100.0,
                    fy: 100.0,
                    cx: 320.0,
                    cy: 180.0,
                    width: 640,
                    height: 360,
                },
            }],
            instances: vec![],
            prompt: "test".into(),
        }
    }

    #[test]
    fn validate_accepts_well_formed_scene() {
        let scene = SceneSequence {
            frames: vec![simple_frame(), simple_frame()],
            lanes: vec![],
        };
        assert!(validate_scene(&scene).is_clean());
    }

    #[test]
    fn validate_flags_duplicate_track_ids() {
        let mut frame = simple_frame();
        let inst = TrackedInstanceFrame {
            track_id: 7,
            visible: true,
            box3d: Box3D {
                center: Vec3::new(10.0, 0.0, 0.0),
                size: [4.0, 2.0, 1.5],
                yaw: 0.0,
                class_id: 0,
                track_id: 7,
            },
        };
        frame.instances = vec![inst, inst];
        let report = validate_scene(&SceneSequence { frames: vec![frame], lanes: vec![] });
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("duplicate track_id 7"));
    }

    #[test]
    fn validate_flags_scaled_rotation() {
        let mut frame = simple_frame();
        frame.ego_pose.rotation = Mat3::from_rows([2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]);
        let report = validate_scene(&SceneSequence { frames: vec![frame], lanes: vec![] });
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("not orthonormal"));
    }

    #[test]
    fn json_round_trip_preserves_scene() {
        let mut frame = simple_frame();
        frame.instances.push(TrackedInstanceFrame {
            track_id: 3,
            visible: true,
            box3d: Box3D {
                center: Vec3::new(12.0, -1.5, 0.8),
                size: [4.6, 1.9, 1.7],
                yaw: 0.31,
                class_id: 1,
                track_id: 3,
            },
        });
        let scene = SceneSequence {
            frames: vec![frame],
            lanes: vec![vec![Vec3::new(0.0, 1.75, 0.0), Vec3::new(50.0, 1.75, 0.0)]],
        };
        let text = scene.to_json();
        let back = SceneSequence::from_json(&text).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let text = r#"{"frames": [], "bogus": 1}"#;
        assert!(SceneSequence::from_json(text).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_box() -> impl Strategy<Value = Box3D> {
            (
                (-30.0..30.0f64, -30.0..30.0f64, -5.0..5.0f64),
                (0.5..8.0f64, 0.5..4.0f64, 0.5..4.0f64),
                -3.1..3.1f64,
            )
                .prop_map(|((x, y, z), (l, w, h), yaw)| Box3D {
                    center: Vec3::new(x, y, z),
                    size: [l, w, h],
                    yaw,
                    class_id: 0,
                    track_id: 1,
                })
        }

        proptest! {
            #[test]
            fn corners_translate_equivariantly(b in arb_box(), dx in -10.0..10.0f64, dy in -10.0..10.0f64, dz in -3.0..3.0f64) {
                let d = Vec3::new(dx, dy, dz);
                let mut moved = b;
                moved.center = b.center + d;
                let base = box_corners(&b);
                let shifted = box_corners(&moved);
                for (s, c) in shifted.iter().zip(base.iter()) {
                    prop_assert!((*s - (*c + d)).abs_max() < 1e-12);
                }
            }

            #[test]
            fn corners_rotate_equivariantly_about_center(b in arb_box(), theta in -1.5..1.5f64) {
                let mut rotated = b;
                rotated.yaw = crate::math::wrap_angle(b.yaw + theta);
                let r = Mat3::rot_z(theta);
                let base = box_corners(&b);
                let turned = box_corners(&rotated);
                for (t, c) in turned.iter().zip(base.iter()) {
                    let expect = r.mul_vec(*c - b.center) + b.center;
                    prop_assert!((*t - expect).abs_max() < 1e-10);
                }
            }

            #[test]
            fn corner_pairwise_distances_depend_only_on_size(b in arb_box(), yaw2 in -3.1..3.1f64, cx in -20.0..20.0f64) {
                let mut other = b;
                other.yaw = yaw2;
                other.center = Vec3::new(cx, -b.center.y, b.center.z + 1.0);
                let a = box_corners(&b);
                let c = box_corners(&other);
                for i in 0..BOX_CORNERS {
                    for j in (i + 1)..BOX_CORNERS {
                        let da = (a[i] - a[j]).norm();
                        let dc = (c[i] - c[j]).norm();
                        prop_assert!((da - dc).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
