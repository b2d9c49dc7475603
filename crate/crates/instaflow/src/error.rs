//! Shared error type for the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("track {track_id} not found in scene")]
    TrackNotFound { track_id: u64 },

    #[error("frame index {frame} out of range (scene has {len} frames)")]
    FrameOutOfRange { frame: usize, len: usize },

    #[error("camera index {camera} out of range (rig has {len} cameras)")]
    CameraOutOfRange { camera: usize, len: usize },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: String,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid event window: start {start} + duration {duration} exceeds scene length {len}")]
    EventWindow {
        start: usize,
        duration: usize,
        len: usize,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(what: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            what: what.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
