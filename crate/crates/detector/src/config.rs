//! Detector configuration (TOML).
//!
//! ```toml
//! server = "http://127.0.0.1:8080"
//! detector_id = "office-pc"
//! poll_interval_s = 10
//! speed = 0                  # 0 = as fast as frames decode, 1 = real time
//!
//! [[source]]
//! camera = 10
//! scenario = "scenarios/standard/standard-1.toml"
//!
//! [[source]]
//! camera = 11
//! manifest = "recordings/cam11/manifest.tsv"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use reboard_core::{CameraId, DetectorId};

fn default_poll() -> f64 {
    10.0
}

fn default_frame_interval() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub server: String,
    pub detector_id: DetectorId,
    /// Seconds of feed time between assignment polls.
    #[serde(default = "default_poll")]
    pub poll_interval_s: f64,
    /// Feed milliseconds between analysed frames.
    #[serde(default = "default_frame_interval")]
    pub frame_interval_ms: u64,
    /// Replay speed relative to real time; 0 runs unpaced.
    #[serde(default)]
    pub speed: f64,
    #[serde(default, rename = "source")]
    pub sources: Vec<SourceEntry>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub camera: CameraId,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl DetectorConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut cfg.sources {
            for p in [&mut s.scenario, &mut s.manifest].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.poll_interval_s > 0.0) {
            return Err(ConfigError::Invalid("poll_interval_s must be positive".into()));
        }
        if self.frame_interval_ms == 0 {
            return Err(ConfigError::Invalid("frame_interval_ms must be positive".into()));
        }
        if !(self.speed >= 0.0) {
            return Err(ConfigError::Invalid("speed must be zero or positive".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.scenario.is_some() == s.manifest.is_some() {
                return Err(ConfigError::Invalid(format!("camera {}: give exactly one of scenario or manifest", s.camera)));
            }
            if self.sources[..i].iter().any(|o| o.camera == s.camera) {
                return Err(ConfigError::Invalid(format!("camera {} listed twice", s.camera)));
            }
        }
        Ok(())
    }
}
