//! The detector loop: follow assignments, analyse frames, upload events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use reboard_core::capture::{AttemptOutcome, CaptureError, CaptureVariant, FrameSource};
use reboard_core::collab::CollaborationInterval;
use reboard_core::feedsim::{ReplayError, ReplayFeed, Scenario, ScenarioError, SyntheticFeed};
use reboard_core::pipeline::CameraPipeline;
use reboard_core::wire::{AssignmentDelta, CameraAssignment, CaptureUpload, Command, DetectorRole, MotionNotice};
use reboard_core::{CameraId, DetectorId};

use crate::config::{DetectorConfig, SourceEntry};
use crate::transport::{Transport, TransportError};

/// A camera's frames plus the span of time they cover.
pub struct Feed {
    source: Box<dyn FrameSource + Send>,
    start: i64,
    end: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum FeedError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("recording {0} has no frames")]
    Empty(String),
}

impl Feed {
    pub fn new(source: Box<dyn FrameSource + Send>, start: i64, end: i64) -> Self {
        Self { source, start, end }
    }

    pub fn scenario(scenario: &Scenario) -> Result<Self, FeedError> {
        let source = SyntheticFeed::new(scenario)?;
        Ok(Self::new(Box::new(source), scenario.start_ms, scenario.end_ms()))
    }

    pub fn manifest(path: &Path) -> Result<Self, FeedError> {
        let feed = ReplayFeed::open(path)?;
        let entries = &feed.manifest().entries;
        let (Some(first), Some(last)) = (entries.first(), entries.last()) else {
            return Err(FeedError::Empty(path.display().to_string()));
        };
        let (start, end) = (first.timestamp, last.timestamp + 1);
        Ok(Self::new(Box::new(feed), start, end))
    }

    pub fn from_entry(entry: &SourceEntry) -> Result<Self, FeedError> {
        match (&entry.scenario, &entry.manifest) {
            (Some(s), _) => Self::scenario(&Scenario::from_file(s)?),
            (None, Some(m)) => Self::manifest(m),
            (None, None) => unreachable!("validated config"),
        }
    }

    /// Whether the feed has a frame at `t` (`start <= t < end`).
    pub fn covers(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Clone, Debug)]
enum Outgoing {
    Capture(Box<CaptureUpload>),
    Collaboration(CollaborationInterval),
    Motion(MotionNotice),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub frames: u64,
    pub captures: u64,
    pub manual_captures: u64,
    pub intervals: u64,
    pub motion_notices: u64,
    /// Events the server refused.
    pub rejected: u64,
    pub failed_polls: u64,
}

struct Active {
    assignment: CameraAssignment,
    pipeline: CameraPipeline,
    last_notice: Option<i64>,
}

impl Active {
    fn has(&self, role: DetectorRole) -> bool {
        self.assignment.roles.contains(&role)
    }
}

pub struct Runtime<T> {
    id: DetectorId,
    transport: T,
    feeds: BTreeMap<CameraId, Feed>,
    cameras: BTreeMap<CameraId, Active>,
    unfed: BTreeSet<CameraId>,
    revision: u64,
    commands: Vec<Command>,
    outbox: VecDeque<Outgoing>,
    stats: Stats,
}

impl<T: Transport> Runtime<T> {
    pub fn new(id: DetectorId, transport: T, feeds: BTreeMap<CameraId, Feed>) -> Self {
        Self {
            id,
            transport,
            feeds,
            cameras: BTreeMap::new(),
            unfed: BTreeSet::new(),
            revision: 0,
            commands: Vec::new(),
            outbox: VecDeque::new(),
            stats: Stats::default(),
        }
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn assigned(&self) -> impl Iterator<Item = &CameraAssignment> {
        self.cameras.values().map(|a| &a.assignment)
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Earliest and latest feed times.
    pub fn span(&self) -> Option<(i64, i64)> {
        let start = self.feeds.values().map(|f| f.start).min()?;
        let end = self.feeds.values().map(|f| f.end).max()?;
        Some((start, end))
    }

    /// Polls for assignment changes and queued commands.
    pub fn sync(&mut self) -> Result<(), TransportError> {
        let delta = self.transport.poll(&self.id, self.revision)?;
        self.apply(delta);
        Ok(())
    }

    fn apply(&mut self, delta: AssignmentDelta) {
        if delta.full {
            let keep: BTreeSet<CameraId> = delta.assigned.iter().map(|a| a.camera_id).collect();
            let gone: Vec<CameraId> = self.cameras.keys().filter(|c| !keep.contains(c)).copied().collect();
            gone.into_iter().for_each(|c| self.release(c));
        }
        for c in delta.removed {
            self.release(c);
        }
        for a in delta.assigned {
            self.assign(a);
        }
        self.commands.extend(delta.commands);
        self.revision = delta.revision;
    }

    fn release(&mut self, camera: CameraId) {
        if let Some(mut active) = self.cameras.remove(&camera) {
            tracing::info!(%camera, "camera released");
            if active.has(DetectorRole::Motion) {
                self.queue_intervals(active.pipeline.finish());
            }
        }
    }

    fn assign(&mut self, a: CameraAssignment) {
        let camera = a.camera_id;
        if !self.feeds.contains_key(&camera) {
            if self.unfed.insert(camera) {
                tracing::warn!(%camera, "assigned a camera this detector has no source for");
            }
            return;
        }
        if let Some(active) = self.cameras.get_mut(&camera) {
            if active.assignment.config == a.config {
                if active.has(DetectorRole::Motion) && !a.roles.contains(&DetectorRole::Motion) {
                    let intervals = active.pipeline.finish();
                    active.pipeline.capture_mut().set_enabled(a.capture_enabled);
                    active.assignment = a;
                    self.queue_intervals(intervals);
                } else {
                    active.pipeline.capture_mut().set_enabled(a.capture_enabled);
                    active.assignment = a;
                }
                return;
            }
            self.release(camera);
        }
        match CameraPipeline::new(camera, &a.config, CaptureVariant::Combined) {
            Ok(mut pipeline) => {
                pipeline.capture_mut().set_enabled(a.capture_enabled);
                tracing::info!(%camera, roles = ?a.roles, enabled = a.capture_enabled, "camera assigned");
                self.cameras.insert(
                    camera,
                    Active {
                        assignment: a,
                        pipeline,
                        last_notice: None,
                    },
                );
            }
            Err(e) => tracing::error!(%camera, error = %e, "unusable camera configuration"),
        }
    }

    fn queue_intervals(&mut self, intervals: Vec<CollaborationInterval>) {
        self.stats.intervals += intervals.len() as u64;
        self.outbox.extend(intervals.into_iter().map(Outgoing::Collaboration));
    }

    fn queue_capture(&mut self, upload: Result<CaptureUpload, reboard_core::imaging::ImagingError>) {
        match upload {
            Ok(u) => self.outbox.push_back(Outgoing::Capture(Box::new(u))),
            Err(e) => tracing::error!(error = %e, "cannot encode capture"),
        }
    }

    /// Analyses the frame at `now` for every assigned camera and runs any
    /// capture attempts and commands that are due.
    pub fn step(&mut self, now: i64) {
        let commands = std::mem::take(&mut self.commands);
        let mut deferred = Vec::new();
        for cmd in commands {
            let camera = match &cmd {
                Command::ManualCapture { camera_id, .. } | Command::Motion { camera_id, .. } => *camera_id,
            };
            let covered = self.feeds.get(&camera).is_some_and(|f| f.covers(now));
            match (self.cameras.contains_key(&camera), covered) {
                (true, true) => self.run_command(cmd, now),
                (true, false) => deferred.push(cmd),
                (false, _) => tracing::warn!(%camera, ?cmd, "command for a camera not held"),
            }
        }
        self.commands = deferred;

        let cameras: Vec<CameraId> = self.cameras.keys().copied().collect();
        for camera in cameras {
            let Some(feed) = self.feeds.get_mut(&camera).filter(|f| f.covers(now)) else {
                continue;
            };
            let active = self.cameras.get_mut(&camera).expect("listed");
            let mut intervals = Vec::new();
            if active.has(DetectorRole::Motion) {
                let frame = match feed.source.grab(now) {
                    Ok(f) => f,
                    Err(e) => {
                        tracing::warn!(%camera, error = %e, "no frame");
                        continue;
                    }
                };
                self.stats.frames += 1;
                let out = active.pipeline.on_frame(&frame);
                intervals = out.intervals;
                let spacing = active.assignment.config.capture.attempt_interval_ms as i64;
                if out.gate_open
                    && !active.has(DetectorRole::Capture)
                    && active.last_notice.is_none_or(|t| now - t >= spacing)
                {
                    active.last_notice = Some(now);
                    self.stats.motion_notices += 1;
                    self.outbox.push_back(Outgoing::Motion(MotionNotice {
                        camera_id: camera,
                        timestamp: now,
                    }));
                }
            }
            let mut captured = None;
            if active.has(DetectorRole::Capture) {
                match active.pipeline.attempt_if_due(feed.source.as_mut(), now) {
                    Ok(Some(AttemptOutcome::Captured(ev))) => captured = Some(CaptureUpload::from_event(&ev, None)),
                    Ok(Some(outcome)) => tracing::trace!(%camera, ?outcome, "attempt"),
                    Ok(None) => {}
                    Err(e) => tracing::warn!(%camera, error = %e, "capture attempt failed"),
                }
            }
            self.queue_intervals(intervals);
            if let Some(up) = captured {
                self.stats.captures += 1;
                self.queue_capture(up);
            }
        }
    }

    fn run_command(&mut self, cmd: Command, now: i64) {
        let active = match &cmd {
            Command::ManualCapture { camera_id, .. } | Command::Motion { camera_id, .. } => self.cameras.get_mut(camera_id),
        };
        let Some(active) = active else { return };
        match cmd {
            Command::Motion { .. } => active.pipeline.capture_mut().notify_motion(),
            Command::ManualCapture { camera_id, request_id } => {
                let feed = self.feeds.get_mut(&camera_id).expect("covered");
                match active.pipeline.capture_mut().manual_capture(feed.source.as_mut(), now) {
                    Ok(ev) => {
                        self.stats.manual_captures += 1;
                        self.queue_capture(CaptureUpload::from_event(&ev, Some(request_id)));
                    }
                    Err(CaptureError::CaptureDisabled(_)) => {
                        tracing::warn!(%camera_id, request_id, "manual capture refused: capture disabled")
                    }
                    Err(e) => tracing::warn!(%camera_id, request_id, error = %e, "manual capture failed"),
                }
            }
        }
    }

    /// Sends queued events in order. Stops at the first retryable failure;
    /// events the server rejects are dropped.
    pub fn flush(&mut self) -> Result<(), TransportError> {
        while let Some(item) = self.outbox.front() {
            let sent = match item {
                Outgoing::Capture(u) => self.transport.post_capture(u),
                Outgoing::Collaboration(i) => self.transport.post_collaboration(i),
                Outgoing::Motion(m) => self.transport.post_motion(m),
            };
            match sent {
                Ok(()) => {}
                Err(e) if e.is_retryable() => return Err(e),
                Err(e) => {
                    self.stats.rejected += 1;
                    tracing::warn!(error = %e, "event rejected");
                }
            }
            self.outbox.pop_front();
        }
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.outbox.len()
    }

    /// Closes open collaboration intervals on every camera and sends what is
    /// left.
    pub fn finish(&mut self) -> Result<(), TransportError> {
        let cameras: Vec<CameraId> = self.cameras.keys().copied().collect();
        for c in cameras {
            if let Some(active) = self.cameras.get_mut(&c) {
                if active.has(DetectorRole::Motion) {
                    let intervals = active.pipeline.finish();
                    self.queue_intervals(intervals);
                }
            }
        }
        self.flush()
    }
}

/// Pacing and polling for [`run`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub poll_interval_ms: i64,
    pub frame_interval_ms: i64,
    pub speed: f64,
}

impl From<&DetectorConfig> for RunOptions {
    fn from(cfg: &DetectorConfig) -> Self {
        Self {
            poll_interval_ms: (cfg.poll_interval_s * 1000.0).round().max(1.0) as i64,
            frame_interval_ms: cfg.frame_interval_ms as i64,
            speed: cfg.speed,
        }
    }
}

/// Plays every feed from its earliest to its latest frame, polling the
/// server on the way. Returns early when `stop` is set.
pub fn run<T: Transport>(rt: &mut Runtime<T>, opts: &RunOptions, stop: Option<&AtomicBool>) -> Stats {
    let Some((start, end)) = rt.span() else {
        return rt.stats().clone();
    };
    let wall_start = Instant::now();
    let mut next_poll = start;
    let mut t = start;
    while t < end {
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            break;
        }
        if t >= next_poll {
            if let Err(e) = rt.sync() {
                rt.stats.failed_polls += 1;
                tracing::warn!(error = %e, "assignment poll failed");
            }
            next_poll = t + opts.poll_interval_ms;
        }
        rt.step(t);
        if let Err(e) = rt.flush() {
            tracing::warn!(error = %e, pending = rt.pending(), "upload failed; will retry");
        }
        if opts.speed > 0.0 {
            let due = wall_start + Duration::from_secs_f64((t - start) as f64 / 1000.0 / opts.speed);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        t += opts.frame_interval_ms;
    }
    if let Err(e) = rt.finish() {
        tracing::error!(error = %e, pending = rt.pending(), "could not deliver final events");
    }
    rt.stats().clone()
}
