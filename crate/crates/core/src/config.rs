//! Per-camera calibration bundle.

use serde::{Deserialize, Serialize};

use crate::capture::CaptureConfig;
use crate::collab::CollabConfig;
use crate::imaging::{grid_columns, rectified_size, BoardGeometry, COARSE_ROWS, FINE_FACTOR};
use crate::motion::MotionConfig;

pub const DEFAULT_OUT_HEIGHT: u32 = 480;

fn default_out_height() -> u32 {
    DEFAULT_OUT_HEIGHT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub geometry: BoardGeometry,
    /// Height of the rectified working image.
    #[serde(default = "default_out_height")]
    pub out_height: u32,
    #[serde(default)]
    pub motion: MotionConfig,
    #[serde(default)]
    pub collab: CollabConfig,
    #[serde(default)]
    pub capture: CaptureConfig,
}

impl CameraConfig {
    pub fn new(geometry: BoardGeometry) -> Self {
        Self {
            geometry,
            out_height: DEFAULT_OUT_HEIGHT,
            motion: MotionConfig::default(),
            collab: CollabConfig::default(),
            capture: CaptureConfig::default(),
        }
    }

    /// Size of the rectified board image.
    pub fn board_size(&self) -> (u32, u32) {
        rectified_size(self.geometry.aspect_ratio, self.out_height)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.geometry.validate().map_err(|e| e.to_string())?;
        let fine_rows = COARSE_ROWS * FINE_FACTOR;
        if self.out_height < fine_rows {
            return Err(format!("out_height {} is below the fine grid height {fine_rows}", self.out_height));
        }
        let (w, _) = self.board_size();
        let fine_cols = grid_columns(self.geometry.aspect_ratio) * FINE_FACTOR;
        if w < fine_cols {
            return Err(format!("rectified width {w} is below the fine grid width {fine_cols}"));
        }
        self.motion.validate()?;
        self.collab.validate()?;
        self.capture.validate()
    }
}
