//! Server configuration file (TOML).
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! data_dir = "data"            # SQLite database and image files
//!
//! [[user]]
//! id = 1
//! name = "Alex"
//! admin = true                 # may reassign cameras between detectors
//!
//! [[detector]]
//! id = "office-pc"
//! roles = ["motion", "capture"]
//!
//! [[camera]]
//! id = 10
//! owner = 1
//! location = "Room 2.14"
//! detector = "office-pc"       # optional; assigns every role the detector has
//! [camera.config]              # calibration bundle; detector settings default
//! out_height = 480
//! [camera.config.geometry]
//! corners = [{ x = 30, y = 30 }, { x = 280, y = 38 }, { x = 274, y = 204 }, { x = 36, y = 198 }]
//! aspect_ratio = 1.6
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reboard_core::config::CameraConfig;
use reboard_core::wire::DetectorRole;
use reboard_core::{CameraId, DetectorId, UserId};

use crate::model::User;

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn all_roles() -> Vec<DetectorRole> {
    DetectorRole::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub id: DetectorId,
    #[serde(default = "all_roles")]
    pub roles: Vec<DetectorRole>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub id: CameraId,
    pub owner: UserId,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub detector: Option<DetectorId>,
    /// Initial state for a new camera; an existing camera keeps its stored flag.
    #[serde(default)]
    pub capture_enabled: Option<bool>,
    pub config: CameraConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default, rename = "user")]
    pub users: Vec<User>,
    #[serde(default, rename = "detector")]
    pub detectors: Vec<DetectorEntry>,
    #[serde(default, rename = "camera")]
    pub cameras: Vec<CameraEntry>,
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

impl ServerConfig {
    pub fn with_data_dir(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen: default_listen(),
            data_dir: data_dir.into(),
            users: Vec::new(),
            detectors: Vec::new(),
            cameras: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServerConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a relative `data_dir` is taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if cfg.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.data_dir = parent.join(&cfg.data_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let mut users = BTreeSet::new();
        for u in &self.users {
            if !users.insert(u.id) {
                return bad(format!("duplicate user {}", u.id));
            }
        }
        let mut detectors = BTreeSet::new();
        for d in &self.detectors {
            if !detectors.insert(&d.id) {
                return bad(format!("duplicate detector {}", d.id));
            }
            if d.roles.is_empty() {
                return bad(format!("detector {} has no roles", d.id));
            }
        }
        let mut cameras = BTreeSet::new();
        for c in &self.cameras {
            if !cameras.insert(c.id) {
                return bad(format!("duplicate camera {}", c.id));
            }
            if !users.contains(&c.owner) {
                return bad(format!("camera {} owner {} is not a user", c.id, c.owner));
            }
            if let Some(d) = &c.detector {
                if !detectors.contains(d) {
                    return bad(format!("camera {} detector {d} is not configured", c.id));
                }
            }
            if let Err(e) = c.config.validate() {
                return bad(format!("camera {}: {e}", c.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let src = include_str!("config.rs");
        let example: String = src
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").strip_prefix(' ').unwrap_or("").to_owned() + "\n")
            .collect();
        let cfg = ServerConfig::from_toml_str(&example).unwrap();
        assert_eq!(cfg.cameras[0].detector, Some(DetectorId::from("office-pc")));
        assert_eq!(cfg.detectors[0].roles, all_roles());
        assert_eq!(cfg.cameras[0].config.board_size(), (768, 480));
    }

    #[test]
    fn rejects_dangling_references() {
        let bad = r#"
            [[camera]]
            id = 1
            owner = 5
            [camera.config.geometry]
            corners = [{ x = 0, y = 0 }, { x = 300, y = 0 }, { x = 300, y = 200 }, { x = 0, y = 200 }]
            aspect_ratio = 1.5
        "#;
        assert!(matches!(ServerConfig::from_toml_str(bad), Err(ConfigError::Invalid(_))));
    }
}
