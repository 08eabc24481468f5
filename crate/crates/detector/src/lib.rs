//! Event detector: follows the server's camera assignments, runs motion,
//! collaboration and capture detection over each assigned camera's feed,
//! and uploads the resulting events.

pub mod config;
pub mod runtime;
pub mod transport;

pub use config::DetectorConfig;
pub use runtime::{run, Feed, RunOptions, Runtime, Stats};
pub use transport::{HttpTransport, Transport, TransportError};
