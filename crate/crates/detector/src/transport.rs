//! How a detector talks to the server.

use std::time::Duration;

use reboard_core::collab::CollaborationInterval;
use reboard_core::wire::{ApiError, AssignmentDelta, CaptureUpload, MotionNotice};
use reboard_core::DetectorId;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    /// The request never got an answer; worth retrying.
    #[error("server unreachable: {0}")]
    Unreachable(String),
    /// The server answered with an error; retrying will not help.
    #[error("server rejected request ({status} {code}): {message}")]
    Rejected { status: u16, code: String, message: String },
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Unreachable(_) => true,
            TransportError::Rejected { status, .. } => *status >= 500,
        }
    }
}

pub trait Transport {
    fn poll(&mut self, detector: &DetectorId, since: u64) -> Result<AssignmentDelta, TransportError>;
    fn post_capture(&mut self, upload: &CaptureUpload) -> Result<(), TransportError>;
    fn post_collaboration(&mut self, interval: &CollaborationInterval) -> Result<(), TransportError>;
    fn post_motion(&mut self, notice: &MotionNotice) -> Result<(), TransportError>;
}

/// JSON over HTTP against the server's detector endpoints.
pub struct HttpTransport {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base: &str) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        Ok(Self {
            base: base.trim_end_matches('/').to_owned(),
            client,
        })
    }

    fn check(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, TransportError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ApiError>(&text) {
            Ok(e) => (e.error, e.message),
            Err(_) => (String::new(), text),
        };
        Err(TransportError::Rejected {
            status: status.as_u16(),
            code,
            message,
        })
    }

    fn post<T: serde::Serialize>(&self, path: &str, body: &T) -> Result<(), TransportError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        Self::check(resp).map(drop)
    }
}

impl Transport for HttpTransport {
    fn poll(&mut self, detector: &DetectorId, since: u64) -> Result<AssignmentDelta, TransportError> {
        let resp = self
            .client
            .get(format!("{}/assignments/{}", self.base, detector))
            .query(&[("since", since)])
            .send()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        Self::check(resp)?
            .json()
            .map_err(|e| TransportError::Unreachable(format!("bad assignment payload: {e}")))
    }

    fn post_capture(&mut self, upload: &CaptureUpload) -> Result<(), TransportError> {
        self.post("/events/capture", upload)
    }

    fn post_collaboration(&mut self, interval: &CollaborationInterval) -> Result<(), TransportError> {
        self.post("/events/collaboration", interval)
    }

    fn post_motion(&mut self, notice: &MotionNotice) -> Result<(), TransportError> {
        self.post("/events/motion", notice)
    }
}
