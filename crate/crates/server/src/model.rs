//! Archive domain types and their JSON views.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use reboard_core::capture::Trigger;
use reboard_core::config::CameraConfig;
use reboard_core::imaging::Grid;
use reboard_core::{CameraId, RecordId, UserId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub name: String,
    #[serde(default)]
    pub admin: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: CameraId,
    pub owner: UserId,
    pub location: String,
    pub config: CameraConfig,
    pub capture_enabled: bool,
}

impl Camera {
    pub fn cell_tolerance(&self) -> f32 {
        self.config.capture.cell_change_tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentType {
    Personal,
    Collaborative,
}

impl ContentType {
    pub fn name(self) -> &'static str {
        match self {
            ContentType::Personal => "personal",
            ContentType::Collaborative => "collaborative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "personal" => Some(ContentType::Personal),
            "collaborative" => Some(ContentType::Collaborative),
            _ => None,
        }
    }
}

/// Axis-aligned rectangle in archived-image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x: 0,
            y: 0,
            width,
            height,
        }
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.width > 0
            && self.height > 0
            && self.x.checked_add(self.width).is_some_and(|r| r <= width)
            && self.y.checked_add(self.height).is_some_and(|b| b <= height)
    }
}

/// Fine-grid cells whose changed fraction exceeded the camera's cell tolerance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellMask {
    pub cols: u32,
    pub rows: u32,
    bits: Vec<u64>,
}

impl CellMask {
    pub fn from_grid(grid: &Grid, tolerance: f32) -> Self {
        let mut bits = vec![0u64; (grid.values.len()).div_ceil(64)];
        for (i, &v) in grid.values.iter().enumerate() {
            if v > tolerance {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        Self {
            cols: grid.cols,
            rows: grid.rows,
            bits,
        }
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        let i = (row * self.cols + col) as usize;
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn any_in(&self, c0: u32, r0: u32, c1: u32, r1: u32) -> bool {
        (r0..r1).any(|r| (c0..c1).any(|c| self.get(c, r)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    /// Lowercase hex SHA-256 of the PNG bytes.
    pub hash: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: RecordId,
    pub camera_id: CameraId,
    pub timestamp: i64,
    pub trigger: Trigger,
    pub image: ImageRef,
    pub coarse: Grid,
    pub fine_changed: CellMask,
    pub changed_cell_count: u32,
    pub changed_fraction: f64,
    pub content_type: ContentType,
    pub shares: BTreeMap<UserId, CropRect>,
    pub contributors: BTreeSet<UserId>,
    pub bookmarked: bool,
    pub tags: BTreeSet<String>,
    pub label: String,
    pub description: String,
}

impl Record {
    pub fn is_shared(&self) -> bool {
        !self.shares.is_empty()
    }
}

/// How a user may see a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Owner,
    Contributor,
    /// Shared to the user; only the crop is visible.
    Shared(CropRect),
}

impl Access {
    pub fn can_edit(self) -> bool {
        matches!(self, Access::Owner | Access::Contributor)
    }
}

/// Record as listed in query results and views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub id: RecordId,
    pub camera_id: CameraId,
    pub timestamp: i64,
    pub content_type: ContentType,
    pub shared: bool,
    pub trigger: Trigger,
    pub changed_cell_count: u32,
    pub bookmarked: bool,
    pub label: String,
    pub tags: Vec<String>,
    pub contributors: Vec<UserId>,
    pub image_url: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareEntry {
    pub user: UserId,
    pub region: CropRect,
}

/// Full record view for the detail pane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordDetail {
    #[serde(flatten)]
    pub summary: RecordSummary,
    pub description: String,
    pub changed_fraction: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub coarse: Grid,
    /// Share list; only the owner and contributors see it.
    pub shares: Vec<ShareEntry>,
    /// The crop this viewer is limited to, if the record was merely shared to them.
    pub viewer_crop: Option<CropRect>,
    /// Default share rectangle (largest changed region), when there is one.
    pub default_share_region: Option<CropRect>,
}

pub fn image_url(id: RecordId) -> String {
    format!("/captures/{id}/image")
}

impl Record {
    pub fn summary(&self) -> RecordSummary {
        RecordSummary {
            id: self.id,
            camera_id: self.camera_id,
            timestamp: self.timestamp,
            content_type: self.content_type,
            shared: self.is_shared(),
            trigger: self.trigger,
            changed_cell_count: self.changed_cell_count,
            bookmarked: self.bookmarked,
            label: self.label.clone(),
            tags: self.tags.iter().cloned().collect(),
            contributors: self.contributors.iter().copied().collect(),
            image_url: image_url(self.id),
        }
    }
}

/// Public camera listing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSummary {
    pub id: CameraId,
    pub owner: UserId,
    pub location: String,
    pub capture_enabled: bool,
    pub grid_columns: u32,
    pub board_width: u32,
    pub board_height: u32,
}

impl Camera {
    pub fn summary(&self) -> CameraSummary {
        let (w, h) = self.config.board_size();
        CameraSummary {
            id: self.id,
            owner: self.owner,
            location: self.location.clone(),
            capture_enabled: self.capture_enabled,
            grid_columns: reboard_core::imaging::grid_columns(self.config.geometry.aspect_ratio),
            board_width: w,
            board_height: h,
        }
    }
}
