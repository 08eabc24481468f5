//! Deterministic frame feeds: scripted synthetic scenes with exact ground
//! truth, and replay of recorded frame directories.
//!
//! Scenario scripts are TOML. Board-relative positions are normalized to the
//! board (`[0, 0]` top-left, `[1, 1]` bottom-right); walkers move in camera
//! pixels. All times are seconds from the scenario start.
//!
//! ```toml
//! name = "standup"
//! seed = 7
//! duration_s = 3600
//! fps = 1
//!
//! [camera]            # optional; defaults shown
//! width = 440
//! height = 240
//! wall = 110
//! noise = 2           # uniform per-pixel jitter, +/- luminance
//!
//! [board]             # optional
//! corners = [[30, 30], [280, 38], [274, 204], [36, 198]]
//! aspect_ratio = 1.6
//! background = 205
//! out_height = 200
//!
//! [[stroke]]          # dark polyline drawn at at_s
//! at_s = 600
//! points = [[0.1, 0.2], [0.45, 0.2]]
//! width = 3           # board pixels at out_height
//! contrast = 140
//!
//! [[erase]]           # region reset to the board background
//! at_s = 1800
//! region = [0.05, 0.1, 0.5, 0.3]
//!
//! [[walker]]          # textured person-sized rectangle; waypoints (t, cx, cy)
//! path = [[590, -40, 130], [600, 120, 130], [640, 120, 130], [650, 360, 130]]
//! size = [56, 120]
//! sway = 4
//!
//! [[lighting]]        # global luminance offset; triangle ramps up and back
//! start_s = 2000
//! end_s = 2300
//! delta = 40
//! shape = "triangle"  # or "step"
//!
//! [[occluder]]        # solid rectangle in front of the board
//! place_s = 900
//! remove_s = 2400
//! rect = [0.3, 0.4, 0.6, 0.8]
//! value = 70
//! ```

mod manifest;
mod render;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::CameraConfig;
use crate::ids::CameraId;
use crate::imaging::{BoardGeometry, Point};
use crate::motion::MotionConfig;

pub use manifest::{export_feed, FrameManifest, ManifestEntry, ReplayError, ReplayFeed};
pub use render::SyntheticFeed;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario script: {0}")]
    InvalidScript(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidScript(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSetup {
    pub width: u32,
    pub height: u32,
    pub wall: u8,
    pub noise: u8,
}

impl Default for CameraSetup {
    fn default() -> Self {
        Self {
            width: 440,
            height: 240,
            wall: 110,
            noise: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoardSetup {
    pub corners: [[f64; 2]; 4],
    pub aspect_ratio: f64,
    pub background: u8,
    pub out_height: u32,
}

impl Default for BoardSetup {
    fn default() -> Self {
        Self {
            corners: [[30.0, 30.0], [280.0, 38.0], [274.0, 204.0], [36.0, 198.0]],
            aspect_ratio: 1.6,
            background: 205,
            out_height: 200,
        }
    }
}

impl BoardSetup {
    pub fn geometry(&self) -> BoardGeometry {
        BoardGeometry::new(self.corners.map(Point::from), self.aspect_ratio)
    }
}

fn default_stroke_width() -> f64 {
    3.0
}

fn default_contrast() -> u8 {
    140
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stroke {
    pub at_s: f64,
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_stroke_width")]
    pub width: f64,
    #[serde(default = "default_contrast")]
    pub contrast: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Erase {
    pub at_s: f64,
    pub region: [f64; 4],
}

fn default_walker_size() -> [u32; 2] {
    [56, 120]
}

fn default_sway() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Walker {
    /// Waypoints `(t_s, center_x, center_y)` in camera pixels.
    pub path: Vec<[f64; 3]>,
    #[serde(default = "default_walker_size")]
    pub size: [u32; 2],
    /// Radius in pixels of the small circular motion of a person in place.
    #[serde(default = "default_sway")]
    pub sway: f64,
}

impl Walker {
    pub fn start_s(&self) -> f64 {
        self.path.first().map_or(0.0, |p| p[0])
    }

    pub fn end_s(&self) -> f64 {
        self.path.last().map_or(0.0, |p| p[0])
    }

    pub fn present_at(&self, t_s: f64) -> bool {
        self.start_s() <= t_s && t_s <= self.end_s()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightingShape {
    #[default]
    Triangle,
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightingShift {
    pub start_s: f64,
    pub end_s: f64,
    pub delta: i32,
    #[serde(default)]
    pub shape: LightingShape,
}

impl LightingShift {
    pub fn offset_at(&self, t_s: f64) -> f64 {
        if t_s < self.start_s || t_s >= self.end_s {
            return 0.0;
        }
        match self.shape {
            LightingShape::Step => self.delta as f64,
            LightingShape::Triangle => {
                let u = (t_s - self.start_s) / (self.end_s - self.start_s);
                self.delta as f64 * (1.0 - (2.0 * u - 1.0).abs())
            }
        }
    }
}

fn default_occluder_value() -> u8 {
    70
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occluder {
    pub place_s: f64,
    /// Absent means the occluder stays until the end.
    #[serde(default)]
    pub remove_s: Option<f64>,
    pub rect: [f64; 4],
    #[serde(default = "default_occluder_value")]
    pub value: u8,
}

impl Occluder {
    pub fn present_at(&self, t_s: f64) -> bool {
        self.place_s <= t_s && self.remove_s.is_none_or(|r| t_s < r)
    }
}

fn default_fps() -> u32 {
    1
}

fn default_calibration_contrast() -> u8 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock time of the first frame, ms since the epoch.
    #[serde(default)]
    pub start_ms: i64,
    pub duration_s: u32,
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default)]
    pub camera_id: Option<u64>,
    /// Stroke contrast the change threshold is calibrated for.
    #[serde(default = "default_calibration_contrast")]
    pub calibration_contrast: u8,
    #[serde(default)]
    pub camera: CameraSetup,
    #[serde(default)]
    pub board: BoardSetup,
    #[serde(default, rename = "stroke")]
    pub strokes: Vec<Stroke>,
    #[serde(default, rename = "erase")]
    pub erases: Vec<Erase>,
    #[serde(default, rename = "walker")]
    pub walkers: Vec<Walker>,
    #[serde(default, rename = "lighting")]
    pub lighting: Vec<LightingShift>,
    #[serde(default, rename = "occluder")]
    pub occluders: Vec<Occluder>,
    /// `[start_s, end_s]` spans excluded from evaluation.
    #[serde(default)]
    pub redactions: Vec<[f64; 2]>,
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn valid_rect(r: &[f64; 4]) -> bool {
    r.iter().all(|&v| in_unit(v)) && r[0] < r[2] && r[1] < r[3]
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn camera_id(&self) -> CameraId {
        CameraId(self.camera_id.unwrap_or(1))
    }

    pub fn end_ms(&self) -> i64 {
        self.start_ms + self.duration_s as i64 * 1000
    }

    pub fn to_ms(&self, t_s: f64) -> i64 {
        self.start_ms + (t_s * 1000.0).round() as i64
    }

    /// Frame timestamps at the scenario frame rate.
    pub fn frame_times(&self) -> impl Iterator<Item = i64> + '_ {
        let n = self.duration_s as u64 * self.fps as u64;
        (0..n).map(move |i| self.start_ms + (i * 1000 / self.fps as u64) as i64)
    }

    /// Camera configuration matching the scenario's installation, with
    /// detector defaults.
    pub fn camera_config(&self) -> CameraConfig {
        let mut cfg = CameraConfig::new(self.board.geometry());
        cfg.out_height = self.board.out_height;
        cfg
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let dur = self.duration_s as f64;
        if self.duration_s == 0 || self.fps == 0 || self.fps > 30 {
            return Err(invalid("duration_s must be positive and fps in 1..=30"));
        }
        let cam = &self.camera;
        if cam.width < 16 || cam.height < 16 {
            return Err(invalid("camera frame too small"));
        }
        self.board.geometry().validate().map_err(|e| invalid(e.to_string()))?;
        let in_frame = self
            .board
            .corners
            .iter()
            .all(|c| (0.0..cam.width as f64).contains(&c[0]) && (0.0..cam.height as f64).contains(&c[1]));
        if !in_frame {
            return Err(invalid("board corners must lie inside the camera frame"));
        }
        self.camera_config().validate().map_err(invalid)?;
        let in_time = |t: f64| (0.0..=dur).contains(&t);
        for (i, s) in self.strokes.iter().enumerate() {
            if !in_time(s.at_s) || s.points.len() < 2 || !s.points.iter().all(|p| in_unit(p[0]) && in_unit(p[1])) {
                return Err(invalid(format!("stroke {i}: needs >= 2 board points and a time within the scenario")));
            }
            if !(s.width > 0.0) || s.contrast == 0 {
                return Err(invalid(format!("stroke {i}: width and contrast must be positive")));
            }
        }
        for (i, e) in self.erases.iter().enumerate() {
            if !in_time(e.at_s) || !valid_rect(&e.region) {
                return Err(invalid(format!("erase {i}: bad time or region")));
            }
        }
        let motion = MotionConfig::default();
        let frame_area = cam.width as f64 * cam.height as f64;
        for (i, w) in self.walkers.iter().enumerate() {
            if w.path.len() < 2 || w.path.windows(2).any(|p| p[0][0] >= p[1][0]) {
                return Err(invalid(format!("walker {i}: path needs >= 2 waypoints with increasing times")));
            }
            if !in_time(w.start_s()) || !in_time(w.end_s()) {
                return Err(invalid(format!("walker {i}: path outside the scenario")));
            }
            let area = (w.size[0] * w.size[1]) as f64 / frame_area;
            if area < motion.min_blob_area || area > motion.max_blob_area {
                return Err(invalid(format!(
                    "walker {i}: size {:?} is {:.3} of the frame, outside the person band",
                    w.size, area
                )));
            }
        }
        for (i, l) in self.lighting.iter().enumerate() {
            if !(l.start_s < l.end_s) || !in_time(l.start_s) || !in_time(l.end_s) {
                return Err(invalid(format!("lighting {i}: bad span")));
            }
        }
        for (i, o) in self.occluders.iter().enumerate() {
            let ok_remove = o.remove_s.is_none_or(|r| r > o.place_s && in_time(r));
            if !in_time(o.place_s) || !ok_remove || !valid_rect(&o.rect) {
                return Err(invalid(format!("occluder {i}: bad span or rect")));
            }
        }
        for (i, r) in self.redactions.iter().enumerate() {
            if !(r[0] < r[1]) || !in_time(r[0]) || !in_time(r[1]) {
                return Err(invalid(format!("redaction {i}: bad span")));
            }
        }
        Ok(())
    }

    /// Number of walkers in the scene at `t_s`.
    pub fn persons_at(&self, t_s: f64) -> u32 {
        self.walkers.iter().filter(|w| w.present_at(t_s)).count() as u32
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut events: Vec<TruthEvent> = self
            .strokes
            .iter()
            .map(|s| {
                let pad_x = s.width / 2.0 / (self.board.out_height as f64 * self.board.aspect_ratio);
                let pad_y = s.width / 2.0 / self.board.out_height as f64;
                let xs = s.points.iter().map(|p| p[0]);
                let ys = s.points.iter().map(|p| p[1]);
                let region = [
                    (xs.clone().fold(f64::INFINITY, f64::min) - pad_x).max(0.0),
                    (ys.clone().fold(f64::INFINITY, f64::min) - pad_y).max(0.0),
                    (xs.fold(f64::NEG_INFINITY, f64::max) + pad_x).min(1.0),
                    (ys.fold(f64::NEG_INFINITY, f64::max) + pad_y).min(1.0),
                ];
                (s.at_s, region, UpdateKind::Add)
            })
            .chain(self.erases.iter().map(|e| (e.at_s, e.region, UpdateKind::Erase)))
            .map(|(t, region, kind)| TruthEvent {
                timestamp: self.to_ms(t),
                region,
                kind,
                collaborative: self.persons_at(t) >= 2,
            })
            .collect();
        events.sort_by_key(|e| e.timestamp);

        let mut changes: Vec<f64> = vec![0.0];
        for w in &self.walkers {
            changes.push(w.start_s());
            changes.push(w.end_s());
        }
        changes.sort_by(f64::total_cmp);
        changes.dedup();
        let mut presence: Vec<PresencePoint> = Vec::new();
        for t in changes {
            // a walker counts through its last waypoint; the drop is
            // recorded just after it
            for probe in [t, t + 1e-3] {
                let count = self.persons_at(probe);
                if presence.last().is_none_or(|p| p.count != count) {
                    presence.push(PresencePoint {
                        timestamp: self.to_ms(probe),
                        count,
                    });
                }
            }
        }

        GroundTruth {
            scenario: self.name.clone(),
            camera_id: self.camera_id(),
            start: self.start_ms,
            end: self.end_ms(),
            events,
            presence,
            redactions: self.redactions.iter().map(|r| [self.to_ms(r[0]), self.to_ms(r[1])]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Add,
    Erase,
}

/// One hand-coded style board update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub timestamp: i64,
    /// Normalized board rectangle `[x0, y0, x1, y1]` that changed.
    pub region: [f64; 4],
    pub kind: UpdateKind,
    pub collaborative: bool,
}

/// Step-function sample of how many people are in the scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresencePoint {
    pub timestamp: i64,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub camera_id: CameraId,
    pub start: i64,
    pub end: i64,
    pub events: Vec<TruthEvent>,
    pub presence: Vec<PresencePoint>,
    #[serde(default)]
    pub redactions: Vec<[i64; 2]>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn is_redacted(&self, t: i64) -> bool {
        self.redactions.iter().any(|r| r[0] <= t && t <= r[1])
    }

    /// Observed duration in days, excluding redacted spans.
    pub fn observation_days(&self) -> f64 {
        let redacted: i64 = self
            .redactions
            .iter()
            .map(|r| (r[1].min(self.end) - r[0].max(self.start)).max(0))
            .sum();
        (self.end - self.start - redacted) as f64 / 86_400_000.0
    }

    pub fn persons_at(&self, t: i64) -> u32 {
        self.presence
            .iter()
            .take_while(|p| p.timestamp <= t)
            .last()
            .map_or(0, |p| p.count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "empty"
        duration_s = 120
    "#;

    #[test]
    fn minimal_scenario_has_no_events() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        let gt = s.ground_truth();
        assert!(gt.events.is_empty());
        assert_eq!(gt.presence, vec![PresencePoint { timestamp: 0, count: 0 }]);
        assert_eq!(s.frame_times().count(), 120);
        assert!((gt.observation_days() - 120.0 / 86_400.0).abs() < 1e-12);
    }

    #[test]
    fn single_stroke_is_one_personal_update() {
        let s = Scenario::from_toml_str(
            r#"
            name = "one"
            duration_s = 300
            [[stroke]]
            at_s = 60
            points = [[0.2, 0.3], [0.6, 0.3]]
        "#,
        )
        .unwrap();
        let gt = s.ground_truth();
        assert_eq!(gt.events.len(), 1);
        assert_eq!(gt.events[0].timestamp, 60_000);
        assert_eq!(gt.events[0].kind, UpdateKind::Add);
        assert!(!gt.events[0].collaborative);
        let r = gt.events[0].region;
        assert!(r[0] < 0.2 && r[2] > 0.6 && r[1] < 0.3 && r[3] > 0.3);
    }

    #[test]
    fn two_walkers_make_an_update_collaborative() {
        let s = Scenario::from_toml_str(
            r#"
            name = "pair"
            duration_s = 1800
            [[stroke]]
            at_s = 600
            points = [[0.2, 0.3], [0.6, 0.3]]
            [[stroke]]
            at_s = 1500
            points = [[0.2, 0.6], [0.6, 0.6]]
            [[walker]]
            path = [[300, 100, 120], [900, 100, 120]]
            [[walker]]
            path = [[300, 220, 120], [900, 220, 120]]
        "#,
        )
        .unwrap();
        let gt = s.ground_truth();
        assert!(gt.events[0].collaborative);
        assert!(!gt.events[1].collaborative);
        assert_eq!(gt.persons_at(600_000), 2);
        assert_eq!(gt.persons_at(900_000), 2);
        assert_eq!(gt.persons_at(901_000), 0);
        assert_eq!(gt.persons_at(299_000), 0);
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        let bad = [
            "name = 'x'\nduration_s = 0",
            "name = 'x'\nduration_s = 60\n[[stroke]]\nat_s = 90\npoints = [[0.1, 0.1], [0.2, 0.2]]",
            "name = 'x'\nduration_s = 60\n[[stroke]]\nat_s = 9\npoints = [[0.1, 0.1]]",
            "name = 'x'\nduration_s = 60\n[[walker]]\npath = [[0, 1, 1], [10, 5, 5]]\nsize = [4, 4]",
            "name = 'x'\nduration_s = 60\n[[walker]]\npath = [[10, 1, 1], [5, 5, 5]]",
            "name = 'x'\nduration_s = 60\n[[occluder]]\nplace_s = 5\nremove_s = 4\nrect = [0.1, 0.1, 0.2, 0.2]",
            "name = 'x'\nduration_s = 60\n[board]\ncorners = [[0, 0], [10, 0], [10, 10], [20, 20]]",
        ];
        for text in bad {
            assert!(
                matches!(Scenario::from_toml_str(text), Err(ScenarioError::InvalidScript(_))),
                "accepted: {text}"
            );
        }
        assert!(matches!(
            Scenario::from_toml_str("name = 'x'\nduration_s = 60\nbogus = 1"),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn lighting_shapes() {
        let tri = LightingShift {
            start_s: 100.0,
            end_s: 200.0,
            delta: 40,
            shape: LightingShape::Triangle,
        };
        assert_eq!(tri.offset_at(99.0), 0.0);
        assert_eq!(tri.offset_at(150.0), 40.0);
        assert_eq!(tri.offset_at(125.0), 20.0);
        assert_eq!(tri.offset_at(200.0), 0.0);
        let step = LightingShift {
            shape: LightingShape::Step,
            delta: -150,
            ..tri
        };
        assert_eq!(step.offset_at(100.0), -150.0);
    }

    #[test]
    fn ground_truth_json_roundtrip() {
        let s = Scenario::from_toml_str(
            "name = 'x'\nduration_s = 600\nredactions = [[100, 200]]\n[[erase]]\nat_s = 30\nregion = [0.1, 0.1, 0.5, 0.5]",
        )
        .unwrap();
        let gt = s.ground_truth();
        assert_eq!(GroundTruth::from_json(&gt.to_json()).unwrap(), gt);
        assert!(gt.is_redacted(150_000));
        assert!((gt.observation_days() - 500.0 / 86_400.0).abs() < 1e-12);
    }
}
