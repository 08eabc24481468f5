//! Capture-side building blocks of the whiteboard archive: image primitives,
//! motion and collaboration detection, the content-change detector, synthetic
//! and recorded frame feeds, and the offline evaluation harness.

pub mod capture;
pub mod collab;
pub mod config;
pub mod eval;
pub mod feedsim;
pub mod ids;
pub mod imaging;
pub mod motion;
pub mod pipeline;
pub mod wire;

pub use ids::{CameraId, DetectorId, RecordId, UserId};
