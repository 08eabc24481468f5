//! JSON payloads exchanged between event detectors and the server.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::capture::{CaptureEvent, Trigger};
use crate::config::CameraConfig;
use crate::ids::{CameraId, DetectorId};
use crate::imaging::{decode_gray, encode_gray, GrayImage, ImagingError, RegionGridSet};

/// Body of `POST /events/capture`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureUpload {
    pub camera_id: CameraId,
    pub timestamp: i64,
    pub trigger: Trigger,
    /// Base64 (standard alphabet, padded) grayscale PNG of the rectified board.
    pub image_png: String,
    pub grids: RegionGridSet,
    pub changed_cell_count: u32,
    pub changed_fraction: f64,
    /// Set when answering a queued manual-capture request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<u64>,
}

impl CaptureUpload {
    pub fn from_event(event: &CaptureEvent, request_id: Option<u64>) -> Result<Self, ImagingError> {
        Ok(Self {
            camera_id: event.camera_id,
            timestamp: event.timestamp,
            trigger: event.trigger,
            image_png: STANDARD.encode(encode_gray(&event.image)?),
            grids: event.grids.clone(),
            changed_cell_count: event.changed_cell_count,
            changed_fraction: event.changed_fraction,
            request_id,
        })
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, ImagingError> {
        STANDARD
            .decode(&self.image_png)
            .map_err(|e| ImagingError::Png(format!("base64: {e}")))
    }

    pub fn image(&self) -> Result<GrayImage, ImagingError> {
        decode_gray(&self.png_bytes()?)
    }
}

/// Body of `POST /events/motion`: a motion-gate notification from a motion
/// detector to whichever detector captures the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionNotice {
    pub camera_id: CameraId,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorRole {
    /// Motion sampling and collaboration segmentation.
    Motion,
    /// Content-change capture.
    Capture,
}

impl DetectorRole {
    pub const ALL: [DetectorRole; 2] = [DetectorRole::Motion, DetectorRole::Capture];

    pub fn name(self) -> &'static str {
        match self {
            DetectorRole::Motion => "motion",
            DetectorRole::Capture => "capture",
        }
    }
}

/// One camera as seen by the detector it is assigned to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraAssignment {
    pub camera_id: CameraId,
    pub roles: Vec<DetectorRole>,
    pub config: CameraConfig,
    pub capture_enabled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    ManualCapture { camera_id: CameraId, request_id: u64 },
    Motion { camera_id: CameraId, timestamp: i64 },
}

/// Response of `GET /assignments/{detector_id}?since=<revision>`.
///
/// `assigned` holds cameras added or changed after `since` (full current
/// state for each); `removed` holds cameras no longer assigned. Applying the
/// delta to the state at `since` yields the state at `revision`. When `full`
/// is set (`since` was 0 or unknown to the server) `assigned` is the complete
/// assignment and anything else held locally must be dropped. Commands are
/// delivered once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDelta {
    pub detector_id: DetectorId,
    pub revision: u64,
    #[serde(default)]
    pub full: bool,
    pub assigned: Vec<CameraAssignment>,
    pub removed: Vec<CameraId>,
    pub commands: Vec<Command>,
}

impl AssignmentDelta {
    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty() && self.removed.is_empty() && self.commands.is_empty()
    }
}

/// Error body returned with every non-2xx response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}
