//! Whiteboard archive server: camera and detector registry, capture and
//! collaboration ingestion, metadata and sharing, and the retrieval views.

pub mod api;
pub mod config;
pub mod coordinator;
pub mod model;
pub mod retrieval;
pub mod share;
pub mod store;

pub use config::ServerConfig;
pub use coordinator::{CoordError, Coordinator};
