//! Offline comparison of capture variants against ground truth.
//!
//! Detections are matched one-to-one to ground-truth updates within a
//! symmetric window (greedy, earliest event first, earliest detection first).
//! Unmatched detections are false positives. An update counts as eventually
//! captured when it was matched, or when any later automatic capture changed
//! a coarse cell its region touches.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capture::{calibrate_threshold, AttemptOutcome, CaptureDetector, CaptureError, CaptureVariant, FrameSource, SourceError};
use crate::collab::{CollabDetector, CollaborationInterval};
use crate::config::CameraConfig;
use crate::feedsim::{GroundTruth, Scenario, ScenarioError, SyntheticFeed};
use crate::imaging::{grid_columns, RawFrame, COARSE_ROWS};
use crate::motion::MotionDetector;

pub const MATCH_WINDOW_MS: i64 = 15 * 60 * 1000;

/// Field results the variants are compared against, per variant:
/// (windowed recall, false positives per day per camera).
pub fn reference_figures(variant: CaptureVariant) -> (f64, f64) {
    match variant {
        CaptureVariant::Combined => (0.69, 1.05),
        CaptureVariant::MotionOnly => (0.64, 1.17),
        CaptureVariant::FilteringOnly => (0.60, 6.97),
    }
}

/// Eventual-capture rate reported for the combined variant in the field.
pub const REFERENCE_EVENTUAL_RECALL: f64 = 0.88;

/// An automatic capture as seen by the evaluator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub timestamp: i64,
    /// Coarse cells `(col, row)` above the cell tolerance.
    pub cells: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: CaptureVariant,
    pub matched: u32,
    pub total: u32,
    pub recall: f64,
    pub false_positives: u32,
    pub observation_days: f64,
    pub cameras: u32,
    pub fp_per_day_per_camera: f64,
    pub eventual_matched: u32,
    pub eventual_recall: f64,
    pub detections: Vec<i64>,
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl VariantResult {
    /// Sums several single-camera results of the same variant.
    pub fn aggregate(variant: CaptureVariant, parts: &[&VariantResult]) -> VariantResult {
        let matched = parts.iter().map(|p| p.matched).sum();
        let total = parts.iter().map(|p| p.total).sum();
        let fp = parts.iter().map(|p| p.false_positives).sum();
        let eventual = parts.iter().map(|p| p.eventual_matched).sum();
        let cameras: u32 = parts.iter().map(|p| p.cameras).sum();
        let camera_days: f64 = parts.iter().map(|p| p.observation_days * p.cameras as f64).sum();
        VariantResult {
            variant,
            matched,
            total,
            recall: ratio(matched, total),
            false_positives: fp,
            observation_days: if cameras == 0 { 0.0 } else { camera_days / cameras as f64 },
            cameras,
            fp_per_day_per_camera: if camera_days > 0.0 { fp as f64 / camera_days } else { 0.0 },
            eventual_matched: eventual,
            eventual_recall: ratio(eventual, total),
            detections: parts.iter().flat_map(|p| p.detections.iter().copied()).collect(),
        }
    }
}

/// Greedy one-to-one matching. Returns `(truth_index, detection_index)`
/// pairs; both inputs must be sorted ascending.
pub fn match_events(truth: &[i64], detections: &[i64], window_ms: i64) -> Vec<(usize, usize)> {
    let mut used = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for (ti, &t) in truth.iter().enumerate() {
        let hit = detections
            .iter()
            .enumerate()
            .find(|&(di, &d)| !used[di] && (d - t).abs() <= window_ms);
        if let Some((di, _)) = hit {
            used[di] = true;
            pairs.push((ti, di));
        }
    }
    pairs
}

/// Coarse cells touched by a normalized board rectangle.
pub fn region_cells(region: [f64; 4], columns: u32) -> Vec<(u32, u32)> {
    let span = |lo: f64, hi: f64, n: u32| {
        let a = ((lo * n as f64).floor() as u32).min(n - 1);
        let b = (((hi * n as f64).ceil() as u32).max(a + 1)).min(n);
        a..b
    };
    let rows = span(region[1], region[3], COARSE_ROWS);
    span(region[0], region[2], columns)
        .flat_map(|c| rows.clone().map(move |r| (c, r)))
        .collect()
}

/// Scores one variant's detections for one camera.
pub fn score(variant: CaptureVariant, truth: &GroundTruth, detections: &[Detection], columns: u32) -> VariantResult {
    let events: Vec<_> = truth.events.iter().filter(|e| !truth.is_redacted(e.timestamp)).collect();
    let dets: Vec<&Detection> = detections.iter().filter(|d| !truth.is_redacted(d.timestamp)).collect();
    let truth_ts: Vec<i64> = events.iter().map(|e| e.timestamp).collect();
    let det_ts: Vec<i64> = dets.iter().map(|d| d.timestamp).collect();
    let pairs = match_events(&truth_ts, &det_ts, MATCH_WINDOW_MS);
    let matched = pairs.len() as u32;
    let total = events.len() as u32;
    let fp = det_ts.len() as u32 - matched;
    let eventual = events
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            let cells = region_cells(e.region, columns);
            pairs.iter().any(|p| p.0 == *i)
                || dets
                    .iter()
                    .any(|d| d.timestamp >= e.timestamp && d.cells.iter().any(|c| cells.contains(c)))
        })
        .count() as u32;
    let days = truth.observation_days();
    VariantResult {
        variant,
        matched,
        total,
        recall: ratio(matched, total),
        false_positives: fp,
        observation_days: days,
        cameras: 1,
        fp_per_day_per_camera: if days > 0.0 { fp as f64 / days } else { 0.0 },
        eventual_matched: eventual,
        eventual_recall: ratio(eventual, total),
        detections: det_ts,
    }
}

/// Memoizes frames so several detectors can burst on the same instants
/// without re-rendering or re-decoding.
struct SharedFrames<'a> {
    inner: &'a mut dyn FrameSource,
    recent: Vec<RawFrame>,
}

impl FrameSource for SharedFrames<'_> {
    fn grab(&mut self, timestamp: i64) -> Result<RawFrame, SourceError> {
        if let Some(f) = self.recent.iter().find(|f| f.timestamp == timestamp) {
            return Ok(f.clone());
        }
        let f = self.inner.grab(timestamp)?;
        if self.recent.len() >= 8 {
            self.recent.remove(0);
        }
        self.recent.push(f.clone());
        Ok(f)
    }
}

/// Detections and collaboration intervals from one pass over a feed.
#[derive(Debug)]
pub struct FeedRun {
    pub detections: Vec<(CaptureVariant, Vec<Detection>)>,
    pub intervals: Vec<CollaborationInterval>,
}

/// Replays `times` from `source` once, feeding one shared motion and
/// collaboration detector and one capture detector per variant.
pub fn run_feed(
    source: &mut dyn FrameSource,
    times: impl IntoIterator<Item = i64>,
    cfg: &CameraConfig,
    camera_id: crate::CameraId,
    variants: &[CaptureVariant],
) -> Result<FeedRun, CaptureError> {
    let mut motion = MotionDetector::new(camera_id, cfg.motion.clone());
    let mut collab = CollabDetector::new(camera_id, cfg.collab.clone());
    let mut detectors = variants
        .iter()
        .map(|&v| CaptureDetector::new(camera_id, cfg.geometry.clone(), cfg.out_height, cfg.capture.clone(), v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut detections: Vec<Vec<Detection>> = vec![Vec::new(); variants.len()];
    let mut intervals = Vec::new();
    let interval = cfg.capture.attempt_interval_ms as i64;
    let mut next_attempt: Option<i64> = None;
    let mut shared = SharedFrames {
        inner: source,
        recent: Vec::new(),
    };
    for t in times {
        let frame = shared.grab(t)?;
        let sample = motion.process(&frame);
        if motion.gate_open(&sample) {
            detectors.iter_mut().for_each(CaptureDetector::notify_motion);
        }
        intervals.extend(collab.push(&sample));
        if next_attempt.is_some_and(|n| t < n) {
            continue;
        }
        next_attempt = Some(t + interval);
        for (det, out) in detectors.iter_mut().zip(&mut detections) {
            match det.attempt(&mut shared, t) {
                Ok(AttemptOutcome::Captured(ev)) => out.push(Detection {
                    timestamp: ev.timestamp,
                    cells: ev.grids.coarse.cells_above(cfg.capture.cell_change_tolerance).collect(),
                }),
                Ok(_) | Err(CaptureError::Source(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    intervals.extend(collab.finish());
    Ok(FeedRun {
        detections: variants.iter().copied().zip(detections).collect(),
        intervals,
    })
}

/// Evaluation of every requested variant on one feed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub change_threshold: f64,
    pub results: Vec<VariantResult>,
    pub collaboration_intervals: Vec<CollaborationInterval>,
}

/// Camera configuration for a scenario with the change threshold calibrated
/// to the scenario's board size and stroke contrast.
pub fn calibrated_config(scenario: &Scenario) -> Result<CameraConfig, CaptureError> {
    let mut cfg = scenario.camera_config();
    let (w, h) = cfg.board_size();
    cfg.capture.change_threshold = calibrate_threshold(w, h, scenario.calibration_contrast, &cfg.capture)?;
    Ok(cfg)
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error("feed and ground truth disagree: {0}")]
    MismatchedSources(String),
    #[error("{}: {source}", path.display())]
    SuiteFile { path: PathBuf, source: ScenarioError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn run_scenario(scenario: &Scenario, variants: &[CaptureVariant]) -> Result<ScenarioResult, EvalError> {
    let cfg = calibrated_config(scenario)?;
    let mut feed = SyntheticFeed::new(scenario)?;
    let truth = feed.ground_truth();
    let run = run_feed(&mut feed, scenario.frame_times(), &cfg, scenario.camera_id(), variants)?;
    Ok(score_run(&scenario.name, &cfg, &truth, run))
}

/// Scores a recorded feed against separately supplied ground truth.
pub fn run_recorded(
    source: &mut dyn FrameSource,
    times: &[i64],
    truth: &GroundTruth,
    cfg: &CameraConfig,
    variants: &[CaptureVariant],
) -> Result<ScenarioResult, EvalError> {
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(EvalError::MismatchedSources("feed has no frames".into()));
    };
    if last < truth.start || first > truth.end {
        return Err(EvalError::MismatchedSources(format!(
            "feed spans [{first}, {last}] but ground truth spans [{}, {}]",
            truth.start, truth.end
        )));
    }
    let run = run_feed(source, times.iter().copied(), cfg, truth.camera_id, variants)?;
    Ok(score_run(&truth.scenario, cfg, truth, run))
}

fn score_run(name: &str, cfg: &CameraConfig, truth: &GroundTruth, run: FeedRun) -> ScenarioResult {
    let columns = grid_columns(cfg.geometry.aspect_ratio);
    ScenarioResult {
        scenario: name.to_string(),
        change_threshold: cfg.capture.change_threshold,
        results: run
            .detections
            .iter()
            .map(|(v, dets)| score(*v, truth, dets, columns))
            .collect(),
        collaboration_intervals: run.intervals,
    }
}

/// Results over a set of scenarios, with per-variant totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenarios: Vec<ScenarioResult>,
    pub overall: Vec<VariantResult>,
}

impl EvalReport {
    pub fn new(scenarios: Vec<ScenarioResult>) -> Self {
        let mut overall = Vec::new();
        for v in CaptureVariant::ALL {
            let parts: Vec<&VariantResult> = scenarios
                .iter()
                .flat_map(|s| s.results.iter().filter(move |r| r.variant == v))
                .collect();
            if !parts.is_empty() {
                overall.push(VariantResult::aggregate(v, &parts));
            }
        }
        Self { scenarios, overall }
    }

    pub fn overall_for(&self, v: CaptureVariant) -> Option<&VariantResult> {
        self.overall.iter().find(|r| r.variant == v)
    }

    /// Filtering alone must log more false positives than either variant
    /// that uses motion. `None` if a variant is missing.
    pub fn ordering_holds(&self) -> Option<bool> {
        let fp = |v| self.overall_for(v).map(|r| r.false_positives);
        let (c, m, f) = (fp(CaptureVariant::Combined)?, fp(CaptureVariant::MotionOnly)?, fp(CaptureVariant::FilteringOnly)?);
        Some(f > c && f > m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Aligned comparison table, variants in fixed order, field figures alongside.
pub fn report(results: &[VariantResult]) -> String {
    let mut rows: Vec<&VariantResult> = results.iter().collect();
    rows.sort_by_key(|r| CaptureVariant::ALL.iter().position(|v| *v == r.variant));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<15} {:>9} {:>7} {:>5} {:>5} {:>8} {:>10} {:>9} | {:>10} {:>10}",
        "variant", "matched", "recall", "FP", "cams", "days/cam", "FP/day/cam", "eventual", "field rec", "field FP/d"
    );
    for r in rows {
        let (ref_recall, ref_fp) = reference_figures(r.variant);
        let _ = writeln!(
            out,
            "{:<15} {:>9} {:>7.3} {:>5} {:>5} {:>8.3} {:>10.2} {:>9.3} | {:>10.2} {:>10.2}",
            r.variant.name(),
            format!("{}/{}", r.matched, r.total),
            r.recall,
            r.false_positives,
            r.cameras,
            r.observation_days,
            r.fp_per_day_per_camera,
            r.eventual_recall,
            ref_recall,
            ref_fp
        );
    }
    out
}

/// Loads every `*.toml` scenario in `dir`, sorted by file name.
pub fn load_suite(dir: &Path) -> Result<Vec<Scenario>, EvalError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| Scenario::from_file(&path).map_err(|source| EvalError::SuiteFile { path, source }))
        .collect()
}
