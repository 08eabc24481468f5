#![allow(dead_code)]

use std::path::Path;

use reboard_core::capture::{CaptureEvent, Trigger};
use reboard_core::config::CameraConfig;
use reboard_core::imaging::{BoardGeometry, GrayImage, Grid, Point, RegionGridSet, COARSE_ROWS, FINE_FACTOR};
use reboard_core::wire::{CaptureUpload, DetectorRole};
use reboard_core::{CameraId, DetectorId, UserId};
use reboard_server::config::{CameraEntry, DetectorEntry};
use reboard_server::model::User;
use reboard_server::ServerConfig;

pub const OWNER: UserId = UserId(1);
pub const FRIEND: UserId = UserId(2);
pub const STRANGER: UserId = UserId(3);
pub const ADMIN: UserId = UserId(9);
pub const CAM: CameraId = CameraId(10);
pub const OTHER_CAM: CameraId = CameraId(11);
pub const COLS: u32 = 16;
pub const IMG_W: u32 = 160;
pub const IMG_H: u32 = 100;

pub fn camera_config() -> CameraConfig {
    CameraConfig::new(BoardGeometry::new(
        [Point::new(30.0, 30.0), Point::new(280.0, 38.0), Point::new(274.0, 204.0), Point::new(36.0, 198.0)],
        1.6,
    ))
}

/// Four users, two detectors (one per role plus a dual-role one), two
/// cameras owned by `OWNER` and `FRIEND`.
pub fn config(data_dir: &Path) -> ServerConfig {
    let mut cfg = ServerConfig::with_data_dir(data_dir);
    for (id, name, admin) in [(OWNER, "owner", false), (FRIEND, "friend", false), (STRANGER, "stranger", false), (ADMIN, "admin", true)] {
        cfg.users.push(User {
            id,
            name: name.into(),
            admin,
        });
    }
    cfg.detectors.push(DetectorEntry {
        id: DetectorId::from("pc-a"),
        roles: DetectorRole::ALL.to_vec(),
    });
    cfg.detectors.push(DetectorEntry {
        id: DetectorId::from("pc-b"),
        roles: DetectorRole::ALL.to_vec(),
    });
    for (id, owner) in [(CAM, OWNER), (OTHER_CAM, FRIEND)] {
        cfg.cameras.push(CameraEntry {
            id,
            owner,
            location: format!("room {}", id.0),
            detector: Some(DetectorId::from("pc-a")),
            capture_enabled: None,
            config: camera_config(),
        });
    }
    cfg
}

/// Coarse grid with the listed cells set to `level`.
pub fn coarse(cells: &[(u32, u32)], level: f32) -> Grid {
    let mut g = Grid::zeros(COLS, COARSE_ROWS);
    for &(c, r) in cells {
        g.set(c, r, level);
    }
    g
}

/// Fine grid consistent with `coarse`: each changed coarse cell lights its
/// whole 10x10 block.
pub fn fine_for(coarse: &Grid) -> Grid {
    let mut g = Grid::zeros(COLS * FINE_FACTOR, COARSE_ROWS * FINE_FACTOR);
    for r in 0..g.rows {
        for c in 0..g.cols {
            g.set(c, r, coarse.get(c / FINE_FACTOR, r / FINE_FACTOR));
        }
    }
    g
}

pub fn upload(camera: CameraId, timestamp: i64, changed: &[(u32, u32)]) -> CaptureUpload {
    let grid = coarse(changed, 0.5);
    let image = GrayImage::from_fn(IMG_W, IMG_H, |x, y| ((x * 7 + y * 3 + timestamp as u32) % 200) as u8 + 20);
    let event = CaptureEvent {
        camera_id: camera,
        timestamp,
        image,
        grids: RegionGridSet {
            fine: fine_for(&grid),
            coarse: grid,
        },
        trigger: Trigger::Automatic,
        changed_cell_count: changed.len() as u32,
        changed_fraction: changed.len() as f64 / (COLS * COARSE_ROWS) as f64,
    };
    CaptureUpload::from_event(&event, None).unwrap()
}
