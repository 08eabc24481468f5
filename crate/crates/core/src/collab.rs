//! Collaboration segmentation over the person-count stream.
//!
//! Every `evaluation_cadence` the detector looks at its sample history. While
//! idle it starts an interval when the mean count over the last
//! `start_window` exceeds `start_threshold`; while active it ends the
//! interval once the mean over the whole `history_span` drops below
//! `end_threshold`. Both boundaries are stamped with the tick time at which
//! the decision was made, so starts lag the actual arrival of people.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ids::CameraId;
use crate::motion::MotionSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollabConfig {
    pub history_span_s: u32,
    pub evaluation_cadence_s: u32,
    pub start_window_s: u32,
    pub start_threshold: f64,
    pub end_threshold: f64,
}

impl Default for CollabConfig {
    fn default() -> Self {
        Self {
            history_span_s: 300,
            evaluation_cadence_s: 15,
            start_window_s: 150,
            start_threshold: 1.8,
            end_threshold: 1.3,
        }
    }
}

impl CollabConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.evaluation_cadence_s == 0 || self.start_window_s == 0 {
            return Err("cadence and start window must be positive".into());
        }
        if self.start_window_s > self.history_span_s {
            return Err(format!(
                "start window {}s exceeds history span {}s",
                self.start_window_s, self.history_span_s
            ));
        }
        if self.end_threshold >= self.start_threshold {
            return Err(format!(
                "end threshold {} must be below start threshold {}",
                self.end_threshold, self.start_threshold
            ));
        }
        Ok(())
    }

    fn cadence_ms(&self) -> i64 {
        self.evaluation_cadence_s as i64 * 1000
    }

    fn history_ms(&self) -> i64 {
        self.history_span_s as i64 * 1000
    }

    fn start_ms(&self) -> i64 {
        self.start_window_s as i64 * 1000
    }
}

/// A span of multi-person activity in front of one board.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollaborationInterval {
    pub camera_id: CameraId,
    pub start: i64,
    pub end: i64,
}

impl CollaborationInterval {
    /// Closed-interval containment.
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CollabState {
    #[default]
    Idle,
    Active {
        since: i64,
    },
}

fn mean(sum: u64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Mean person count of the samples with `now - span < t <= now`; an empty
/// window counts as nobody present.
pub fn windowed_mean(samples: &[MotionSample], now: i64, span_ms: i64) -> f64 {
    let (sum, n) = samples
        .iter()
        .filter(|s| s.timestamp <= now && s.timestamp > now - span_ms)
        .fold((0u64, 0usize), |(sum, n), s| (sum + s.person_count as u64, n + 1));
    mean(sum, n)
}

/// One evaluation tick over an explicit sample history.
pub fn step(
    state: &mut CollabState,
    camera_id: CameraId,
    samples: &[MotionSample],
    now: i64,
    cfg: &CollabConfig,
) -> Option<CollaborationInterval> {
    transition(
        state,
        camera_id,
        now,
        || windowed_mean(samples, now, cfg.start_ms()),
        || windowed_mean(samples, now, cfg.history_ms()),
        cfg,
    )
}

fn transition(
    state: &mut CollabState,
    camera_id: CameraId,
    now: i64,
    start_mean: impl FnOnce() -> f64,
    history_mean: impl FnOnce() -> f64,
    cfg: &CollabConfig,
) -> Option<CollaborationInterval> {
    match *state {
        CollabState::Idle => {
            if start_mean() > cfg.start_threshold {
                *state = CollabState::Active { since: now };
            }
            None
        }
        CollabState::Active { since } => {
            if history_mean() < cfg.end_threshold {
                *state = CollabState::Idle;
                Some(CollaborationInterval {
                    camera_id,
                    start: since,
                    end: now,
                })
            } else {
                None
            }
        }
    }
}

/// Ends an open interval at `now` (end of stream).
pub fn flush(state: &mut CollabState, camera_id: CameraId, now: i64) -> Option<CollaborationInterval> {
    let out = match *state {
        CollabState::Active { since } if now > since => Some(CollaborationInterval {
            camera_id,
            start: since,
            end: now,
        }),
        _ => None,
    };
    *state = CollabState::Idle;
    out
}

/// Sliding window with a running sum of person counts.
#[derive(Debug, Default)]
struct Window {
    samples: VecDeque<(i64, u32)>,
    sum: u64,
}

impl Window {
    fn push(&mut self, t: i64, count: u32) {
        self.samples.push_back((t, count));
        self.sum += count as u64;
    }

    fn evict_through(&mut self, cutoff: i64) {
        while let Some(&(t, c)) = self.samples.front() {
            if t > cutoff {
                break;
            }
            self.samples.pop_front();
            self.sum -= c as u64;
        }
    }

    fn mean(&self) -> f64 {
        mean(self.sum, self.samples.len())
    }
}

/// Streaming per-camera collaboration detector.
///
/// Ticks are aligned to the first sample: `origin + k * cadence` for `k >= 1`.
/// A tick at `T` sees every sample stamped `<= T`.
#[derive(Debug)]
pub struct CollabDetector {
    camera_id: CameraId,
    cfg: CollabConfig,
    state: CollabState,
    history: Window,
    recent: Window,
    next_tick: Option<i64>,
    last_sample: Option<i64>,
}

impl CollabDetector {
    pub fn new(camera_id: CameraId, cfg: CollabConfig) -> Self {
        Self {
            camera_id,
            cfg,
            state: CollabState::Idle,
            history: Window::default(),
            recent: Window::default(),
            next_tick: None,
            last_sample: None,
        }
    }

    pub fn state(&self) -> CollabState {
        self.state
    }

    pub fn config(&self) -> &CollabConfig {
        &self.cfg
    }

    /// Adds a sample, first running every tick strictly before it. Samples
    /// that do not advance time are ignored.
    pub fn push(&mut self, sample: &MotionSample) -> Vec<CollaborationInterval> {
        let t = sample.timestamp;
        if self.last_sample.is_some_and(|last| t <= last) {
            return Vec::new();
        }
        let mut out = Vec::new();
        match self.next_tick {
            None => self.next_tick = Some(t + self.cfg.cadence_ms()),
            Some(_) => self.run_ticks(|tick| tick < t, &mut out),
        }
        self.history.push(t, sample.person_count);
        self.recent.push(t, sample.person_count);
        self.last_sample = Some(t);
        out
    }

    /// Runs every pending tick at or before `now`.
    pub fn advance_to(&mut self, now: i64) -> Vec<CollaborationInterval> {
        let mut out = Vec::new();
        self.run_ticks(|tick| tick <= now, &mut out);
        out
    }

    /// Closes the stream at `now`, emitting any interval still open.
    pub fn flush(&mut self, now: i64) -> Option<CollaborationInterval> {
        flush(&mut self.state, self.camera_id, now)
    }

    /// Runs the remaining ticks up to the last sample and flushes there.
    pub fn finish(&mut self) -> Vec<CollaborationInterval> {
        let Some(last) = self.last_sample else {
            return Vec::new();
        };
        let mut out = self.advance_to(last);
        out.extend(self.flush(last));
        out
    }

    fn run_ticks(&mut self, due: impl Fn(i64) -> bool, out: &mut Vec<CollaborationInterval>) {
        while let Some(tick) = self.next_tick.filter(|&t| due(t)) {
            self.history.evict_through(tick - self.cfg.history_ms());
            self.recent.evict_through(tick - self.cfg.start_ms());
            let (recent, history) = (&self.recent, &self.history);
            out.extend(transition(
                &mut self.state,
                self.camera_id,
                tick,
                || recent.mean(),
                || history.mean(),
                &self.cfg,
            ));
            self.next_tick = Some(tick + self.cfg.cadence_ms());
        }
    }
}
