//! One camera's detectors wired together: every analyzed frame feeds the
//! motion detector, whose samples drive collaboration segmentation and whose
//! gate arms the capture detector.

use crate::capture::{AttemptOutcome, CaptureDetector, CaptureError, CaptureVariant, FrameSource};
use crate::collab::{CollabDetector, CollaborationInterval};
use crate::config::CameraConfig;
use crate::ids::CameraId;
use crate::imaging::{ImagingError, RawFrame};
use crate::motion::{MotionDetector, MotionSample};

#[derive(Debug)]
pub struct FrameOutput {
    pub sample: MotionSample,
    pub gate_open: bool,
    pub intervals: Vec<CollaborationInterval>,
}

#[derive(Debug)]
pub struct CameraPipeline {
    camera_id: CameraId,
    motion: MotionDetector,
    collab: CollabDetector,
    capture: CaptureDetector,
    attempt_interval_ms: i64,
    next_attempt: Option<i64>,
}

impl CameraPipeline {
    pub fn new(camera_id: CameraId, cfg: &CameraConfig, variant: CaptureVariant) -> Result<Self, ImagingError> {
        Ok(Self {
            camera_id,
            motion: MotionDetector::new(camera_id, cfg.motion.clone()),
            collab: CollabDetector::new(camera_id, cfg.collab.clone()),
            capture: CaptureDetector::new(
                camera_id,
                cfg.geometry.clone(),
                cfg.out_height,
                cfg.capture.clone(),
                variant,
            )?,
            attempt_interval_ms: cfg.capture.attempt_interval_ms as i64,
            next_attempt: None,
        })
    }

    pub fn camera_id(&self) -> CameraId {
        self.camera_id
    }

    pub fn capture(&self) -> &CaptureDetector {
        &self.capture
    }

    pub fn capture_mut(&mut self) -> &mut CaptureDetector {
        &mut self.capture
    }

    pub fn on_frame(&mut self, frame: &RawFrame) -> FrameOutput {
        let sample = self.motion.process(frame);
        let gate_open = self.motion.gate_open(&sample);
        if gate_open {
            self.capture.notify_motion();
        }
        let intervals = self.collab.push(&sample);
        FrameOutput {
            sample,
            gate_open,
            intervals,
        }
    }

    /// Runs a capture attempt if one is due at `now`. The first call attempts
    /// immediately; later attempts follow at the configured interval.
    pub fn attempt_if_due(
        &mut self,
        source: &mut dyn FrameSource,
        now: i64,
    ) -> Result<Option<AttemptOutcome>, CaptureError> {
        if self.next_attempt.is_some_and(|t| now < t) {
            return Ok(None);
        }
        self.next_attempt = Some(now + self.attempt_interval_ms);
        self.capture.attempt(source, now).map(Some)
    }

    /// Ends the stream, closing any open collaboration interval.
    pub fn finish(&mut self) -> Vec<CollaborationInterval> {
        self.collab.finish()
    }
}
