//! Content-change capture: a motion-gated burst, quality checks, stroke
//! filtering and a diff against the last accepted board image.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::CameraId;
use crate::imaging::{
    label_components, mean_brightness, median_brightness, pixel_diff, rectify, region_grids, stroke_filter,
    BoardGeometry, Connectivity, DiffMap, GrayImage, ImagingError, RawFrame, RegionGridSet,
    DEFAULT_PIXEL_TOLERANCE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureConfig {
    pub burst_size: u32,
    pub burst_spacing_ms: u32,
    /// Largest changed fraction tolerated between consecutive burst frames.
    pub burst_agreement_tolerance: f64,
    /// Mean luminance below which the office is assumed dark.
    pub min_brightness: f64,
    /// Minimum area of a solid changed region, as a fraction of the board.
    pub static_occlusion_area: f64,
    /// Bounding-box fill ratio above which a changed region counts as solid.
    pub occlusion_fill_ratio: f64,
    pub high_pass_k: f64,
    /// Filtered changed fraction a candidate must exceed to be captured.
    pub change_threshold: f64,
    /// Changed fraction for a grid cell to count as changed.
    pub cell_change_tolerance: f32,
    pub pixel_tolerance: u8,
    /// How often an automatic capture is attempted.
    pub attempt_interval_ms: u32,
    pub manual_retries: u32,
    /// Fraction of the calibration mark's response used as the threshold.
    pub calibration_margin: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            burst_size: 3,
            burst_spacing_ms: 200,
            burst_agreement_tolerance: 0.002,
            min_brightness: 40.0,
            static_occlusion_area: 0.08,
            occlusion_fill_ratio: 0.6,
            high_pass_k: 5.0,
            change_threshold: 0.005,
            cell_change_tolerance: 0.05,
            pixel_tolerance: DEFAULT_PIXEL_TOLERANCE,
            attempt_interval_ms: 10_000,
            manual_retries: 5,
            calibration_margin: 0.5,
        }
    }
}

fn unit_open(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(format!("{name} {v} outside (0, 1)"))
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.burst_size < 2 {
            return Err(format!("burst_size {} must be at least 2", self.burst_size));
        }
        unit_open("burst_agreement_tolerance", self.burst_agreement_tolerance)?;
        unit_open("static_occlusion_area", self.static_occlusion_area)?;
        unit_open("occlusion_fill_ratio", self.occlusion_fill_ratio)?;
        unit_open("change_threshold", self.change_threshold)?;
        unit_open("cell_change_tolerance", self.cell_change_tolerance as f64)?;
        unit_open("calibration_margin", self.calibration_margin)?;
        if !(self.high_pass_k > 4.0) {
            return Err(format!("high_pass_k {} must exceed 4", self.high_pass_k));
        }
        if self.attempt_interval_ms == 0 {
            return Err("attempt_interval_ms must be positive".into());
        }
        Ok(())
    }
}

/// Which parts of the decision chain are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureVariant {
    /// Motion gate plus filtered diff.
    Combined,
    /// Motion gate, diff on the unfiltered image.
    MotionOnly,
    /// Filtered diff, motion gate held open.
    FilteringOnly,
}

impl CaptureVariant {
    pub const ALL: [CaptureVariant; 3] = [Self::Combined, Self::MotionOnly, Self::FilteringOnly];

    pub fn name(self) -> &'static str {
        match self {
            Self::Combined => "combined",
            Self::MotionOnly => "motion_only",
            Self::FilteringOnly => "filtering_only",
        }
    }

    fn uses_motion(self) -> bool {
        self != Self::FilteringOnly
    }

    fn uses_filter(self) -> bool {
        self != Self::MotionOnly
    }
}

impl std::str::FromStr for CaptureVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

impl std::fmt::Display for CaptureVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Automatic,
    Manual,
}

/// An accepted board image, ready for archiving.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptureEvent {
    pub camera_id: CameraId,
    pub timestamp: i64,
    /// Rectified, unfiltered board image.
    pub image: GrayImage,
    pub grids: RegionGridSet,
    pub trigger: Trigger,
    pub changed_cell_count: u32,
    pub changed_fraction: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("camera feed unavailable: {0}")]
    Unavailable(String),
}

/// Anything that can produce the camera's view at a requested time.
pub trait FrameSource {
    fn grab(&mut self, timestamp: i64) -> Result<RawFrame, SourceError>;
}

#[derive(Debug, Error, PartialEq)]
pub enum CaptureError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("capture is disabled for camera {0}")]
    CaptureDisabled(CameraId),
    #[error("board stayed obstructed for {0} bursts")]
    Obstructed(u32),
    #[error("mark of contrast {0} is indistinguishable from a blank board")]
    ContrastTooLow(u8),
}

/// What an automatic attempt decided.
#[derive(Clone, Debug, PartialEq)]
pub enum AttemptOutcome {
    NoMotion,
    Unstable,
    TooDark,
    Occluded,
    /// First usable image; stored as the reference without an event.
    Bootstrapped,
    BelowThreshold(f64),
    /// Would have captured, but capture is disabled; the reference moved on.
    Suppressed,
    Captured(CaptureEvent),
}

impl AttemptOutcome {
    /// True when the burst never got as far as the change test.
    pub fn is_discard(&self) -> bool {
        matches!(self, Self::Unstable | Self::TooDark | Self::Occluded)
    }
}

/// The last accepted board image, kept both raw and filtered.
#[derive(Clone, Debug)]
struct Reference {
    raw: GrayImage,
    filtered: GrayImage,
}

/// True when `candidate` differs from `last_accepted` by one large, solid
/// region (a chair or a person standing still) rather than by drawing.
///
/// The global median shift between the images is removed first so a
/// lighting change does not look like one board-sized occluder.
pub fn check_static_occlusion(candidate: &GrayImage, last_accepted: &GrayImage, cfg: &CaptureConfig) -> bool {
    if candidate.dimensions() != last_accepted.dimensions() {
        return false;
    }
    let shift = median_brightness(candidate) as i32 - median_brightness(last_accepted) as i32;
    let tol = cfg.pixel_tolerance as i32;
    let mask: Vec<bool> = candidate
        .pixels()
        .iter()
        .zip(last_accepted.pixels())
        .map(|(&c, &r)| (c as i32 - shift - r as i32).abs() > tol)
        .collect();
    let (w, h) = candidate.dimensions();
    let min_area = cfg.static_occlusion_area * (w as f64 * h as f64);
    label_components(w, h, &mask, Connectivity::Eight)
        .iter()
        .any(|c| c.area as f64 > min_area && c.fill_ratio() > cfg.occlusion_fill_ratio)
}

/// Background luminance of the synthetic board used for calibration.
pub const CALIBRATION_BACKGROUND: u8 = 200;

/// Filtered changed fraction produced by a square mark covering 1/100 of a
/// blank `width` x `height` board at the given contrast.
pub fn calibration_response(width: u32, height: u32, stroke_contrast: u8, cfg: &CaptureConfig) -> f64 {
    let blank = GrayImage::filled(width, height, CALIBRATION_BACKGROUND);
    let mark = with_calibration_mark(&blank, stroke_contrast);
    let a = stroke_filter(&blank, cfg.high_pass_k);
    let b = stroke_filter(&mark, cfg.high_pass_k);
    pixel_diff(&a, &b, cfg.pixel_tolerance)
        .expect("same dimensions")
        .changed_fraction()
}

/// Darkens a centered square of 1/100 of the image area by `contrast`.
pub fn with_calibration_mark(img: &GrayImage, contrast: u8) -> GrayImage {
    let (w, h) = img.dimensions();
    let side = ((w as f64 * h as f64 / 100.0).sqrt().round() as u32).clamp(1, w.min(h));
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let mut out = img.clone();
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            out.set(x, y, img.get(x, y).saturating_sub(contrast));
        }
    }
    out
}

/// Picks the change threshold for a board of `width` x `height` pixels: a
/// fixed fraction (`calibration_margin`) of the response to a 1/100-area mark,
/// so that mark triggers with room to spare for noise.
pub fn calibrate_threshold(width: u32, height: u32, stroke_contrast: u8, cfg: &CaptureConfig) -> Result<f64, CaptureError> {
    let response = calibration_response(width, height, stroke_contrast, cfg);
    let t = response * cfg.calibration_margin;
    if response == 0.0 || t * (width as f64 * height as f64) < 1.0 {
        return Err(CaptureError::ContrastTooLow(stroke_contrast));
    }
    Ok(t)
}

/// Per-camera capture state machine.
#[derive(Debug)]
pub struct CaptureDetector {
    camera_id: CameraId,
    geometry: BoardGeometry,
    out_height: u32,
    cfg: CaptureConfig,
    variant: CaptureVariant,
    reference: Option<Reference>,
    motion_pending: bool,
    enabled: bool,
}

impl CaptureDetector {
    pub fn new(
        camera_id: CameraId,
        geometry: BoardGeometry,
        out_height: u32,
        cfg: CaptureConfig,
        variant: CaptureVariant,
    ) -> Result<Self, ImagingError> {
        geometry.validate()?;
        Ok(Self {
            camera_id,
            geometry,
            out_height,
            cfg,
            variant,
            reference: None,
            motion_pending: false,
            enabled: true,
        })
    }

    pub fn camera_id(&self) -> CameraId {
        self.camera_id
    }

    pub fn config(&self) -> &CaptureConfig {
        &self.cfg
    }

    pub fn variant(&self) -> CaptureVariant {
        self.variant
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// While disabled, automatic attempts still track the board so content
    /// written in private is not archived once capture is re-enabled.
    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    pub fn motion_pending(&self) -> bool {
        self.motion_pending
    }

    /// Records that the motion gate opened.
    pub fn notify_motion(&mut self) {
        self.motion_pending = true;
    }

    /// The current diff reference (raw rectified image), if any.
    pub fn reference(&self) -> Option<&GrayImage> {
        self.reference.as_ref().map(|r| &r.raw)
    }

    /// Replaces the diff reference, e.g. with the last archived image after a
    /// restart.
    pub fn set_reference(&mut self, raw: GrayImage) {
        let filtered = stroke_filter(&raw, self.cfg.high_pass_k);
        self.reference = Some(Reference { raw, filtered });
    }

    fn acquire_burst(&self, source: &mut dyn FrameSource, start: i64) -> Result<Option<GrayImage>, CaptureError> {
        let mut prev: Option<GrayImage> = None;
        for i in 0..self.cfg.burst_size {
            let t = start + i as i64 * self.cfg.burst_spacing_ms as i64;
            let img = rectify(&source.grab(t)?, &self.geometry, self.out_height)?;
            if let Some(p) = &prev {
                let d = pixel_diff(p, &img, self.cfg.pixel_tolerance)?;
                if d.changed_fraction() > self.cfg.burst_agreement_tolerance {
                    return Ok(None);
                }
            }
            prev = Some(img);
        }
        Ok(prev)
    }

    /// Burst plus quality checks; `Err(outcome)` carries the discard reason.
    fn acquire_checked(&self, source: &mut dyn FrameSource, start: i64) -> Result<Result<GrayImage, AttemptOutcome>, CaptureError> {
        let Some(img) = self.acquire_burst(source, start)? else {
            return Ok(Err(AttemptOutcome::Unstable));
        };
        if mean_brightness(&img) < self.cfg.min_brightness {
            return Ok(Err(AttemptOutcome::TooDark));
        }
        if let Some(r) = &self.reference {
            if check_static_occlusion(&img, &r.raw, &self.cfg) {
                return Ok(Err(AttemptOutcome::Occluded));
            }
        }
        Ok(Ok(img))
    }

    fn diff_against_reference(&self, raw: &GrayImage, filtered: &GrayImage) -> Result<Option<DiffMap>, ImagingError> {
        let Some(r) = &self.reference else {
            return Ok(None);
        };
        let d = if self.variant.uses_filter() {
            pixel_diff(filtered, &r.filtered, self.cfg.pixel_tolerance)?
        } else {
            pixel_diff(raw, &r.raw, self.cfg.pixel_tolerance)?
        };
        Ok(Some(d))
    }

    fn build_event(&self, image: GrayImage, diff: Option<&DiffMap>, timestamp: i64, trigger: Trigger) -> Result<CaptureEvent, ImagingError> {
        let (grids, fraction) = match diff {
            Some(d) => (region_grids(d, self.geometry.aspect_ratio, self.cfg.pixel_tolerance)?, d.changed_fraction()),
            None => (RegionGridSet::empty(crate::imaging::grid_columns(self.geometry.aspect_ratio)), 0.0),
        };
        let changed_cell_count = grids.coarse.count_above(self.cfg.cell_change_tolerance) as u32;
        Ok(CaptureEvent {
            camera_id: self.camera_id,
            timestamp,
            image,
            grids,
            trigger,
            changed_cell_count,
            changed_fraction: fraction,
        })
    }

    /// One automatic attempt at `now`. Source errors leave all state as it was.
    ///
    /// The pending motion flag is consumed only once the burst passes the
    /// quality checks, so an obstructed board is retried on the next attempt.
    pub fn attempt(&mut self, source: &mut dyn FrameSource, now: i64) -> Result<AttemptOutcome, CaptureError> {
        let bootstrap = self.reference.is_none();
        if !bootstrap && self.variant.uses_motion() && !self.motion_pending {
            return Ok(AttemptOutcome::NoMotion);
        }
        let img = match self.acquire_checked(source, now)? {
            Ok(img) => img,
            Err(discard) => return Ok(discard),
        };
        self.motion_pending = false;
        let filtered = stroke_filter(&img, self.cfg.high_pass_k);
        let Some(diff) = self.diff_against_reference(&img, &filtered)? else {
            self.reference = Some(Reference { raw: img, filtered });
            return Ok(AttemptOutcome::Bootstrapped);
        };
        let fraction = diff.changed_fraction();
        if fraction <= self.cfg.change_threshold {
            return Ok(AttemptOutcome::BelowThreshold(fraction));
        }
        if !self.enabled {
            self.reference = Some(Reference { raw: img, filtered });
            return Ok(AttemptOutcome::Suppressed);
        }
        let event = self.build_event(img.clone(), Some(&diff), now, Trigger::Automatic)?;
        self.reference = Some(Reference { raw: img, filtered });
        Ok(AttemptOutcome::Captured(event))
    }

    /// User-requested capture: same burst and quality checks, retried up to
    /// `manual_retries` times, but no change threshold.
    pub fn manual_capture(&mut self, source: &mut dyn FrameSource, now: i64) -> Result<CaptureEvent, CaptureError> {
        if !self.enabled {
            return Err(CaptureError::CaptureDisabled(self.camera_id));
        }
        let burst_span = self.cfg.burst_size as i64 * self.cfg.burst_spacing_ms as i64;
        let tries = self.cfg.manual_retries.max(1);
        for i in 0..tries {
            let start = now + i as i64 * burst_span;
            let Ok(img) = self.acquire_checked(source, start)? else {
                continue;
            };
            let filtered = stroke_filter(&img, self.cfg.high_pass_k);
            let diff = self.diff_against_reference(&img, &filtered)?;
            let event = self.build_event(img.clone(), diff.as_ref(), start, Trigger::Manual)?;
            self.reference = Some(Reference { raw: img, filtered });
            return Ok(event);
        }
        Err(CaptureError::Obstructed(tries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Point;

    /// Serves a fixed camera image, optionally a different one per grab.
    struct Scripted {
        frames: Vec<GrayImage>,
        next: usize,
        fail: bool,
    }

    impl Scripted {
        fn still(img: GrayImage) -> Self {
            Self {
                frames: vec![img],
                next: 0,
                fail: false,
            }
        }

        fn show(&mut self, img: GrayImage) {
            self.frames = vec![img];
            self.next = 0;
        }
    }

    impl FrameSource for Scripted {
        fn grab(&mut self, t: i64) -> Result<RawFrame, SourceError> {
            if self.fail {
                return Err(SourceError::Unavailable("unplugged".into()));
            }
            let img = &self.frames[self.next.min(self.frames.len() - 1)];
            self.next += 1;
            Ok(RawFrame::from_gray(img, t))
        }
    }

    const W: u32 = 160;
    const H: u32 = 100;

    /// Board fills the whole frame so rectification is the identity.
    fn sized_detector(w: u32, h: u32, variant: CaptureVariant) -> CaptureDetector {
        let geo = BoardGeometry::new(
            [
                Point::new(0.0, 0.0),
                Point::new(w as f64 - 1.0, 0.0),
                Point::new(w as f64 - 1.0, h as f64 - 1.0),
                Point::new(0.0, h as f64 - 1.0),
            ],
            w as f64 / h as f64,
        );
        CaptureDetector::new(CameraId(1), geo, h, CaptureConfig::default(), variant).unwrap()
    }

    fn detector(variant: CaptureVariant) -> CaptureDetector {
        sized_detector(W, H, variant)
    }

    fn blank() -> GrayImage {
        GrayImage::filled(W, H, 200)
    }

    fn with_rect(img: &GrayImage, x0: u32, y0: u32, w: u32, h: u32, v: u8) -> GrayImage {
        let mut out = img.clone();
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                out.set(x, y, v);
            }
        }
        out
    }

    fn bootstrapped(variant: CaptureVariant, src: &mut Scripted) -> CaptureDetector {
        let mut det = detector(variant);
        assert_eq!(det.attempt(src, 0).unwrap(), AttemptOutcome::Bootstrapped);
        det
    }

    #[test]
    fn gate_precedes_imaging() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        src.show(with_rect(&blank(), 20, 20, 40, 4, 40));
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::NoMotion);
        let mut det = bootstrapped(CaptureVariant::FilteringOnly, &mut Scripted::still(blank()));
        assert!(matches!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::Captured(_)));
    }

    #[test]
    fn unchanged_board_is_below_threshold() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.notify_motion();
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::BelowThreshold(0.0));
        assert!(!det.motion_pending());
    }

    #[test]
    fn stroke_marks_exactly_its_coarse_cells() {
        // default working height: 768x480 board, 48 px coarse cells. The
        // stroke covers cells (2..5, 3) exactly, about 2% of the board; the
        // 2 px halo of the two 3x3 filters stays under the 5% cell tolerance
        let (w, h) = (768, 480);
        let board = GrayImage::filled(w, h, 200);
        let mut src = Scripted::still(board.clone());
        let mut det = sized_detector(w, h, CaptureVariant::Combined);
        assert_eq!(det.attempt(&mut src, 0).unwrap(), AttemptOutcome::Bootstrapped);
        let stroked = with_rect(&board, 96, 144, 144, 48, 60);
        src.show(stroked.clone());
        det.notify_motion();
        let AttemptOutcome::Captured(ev) = det.attempt(&mut src, 10_000).unwrap() else {
            panic!("expected a capture");
        };
        let mut cells: Vec<_> = ev.grids.coarse.cells_above(det.config().cell_change_tolerance).collect();
        cells.sort();
        assert_eq!(cells, vec![(2, 3), (3, 3), (4, 3)]);
        assert_eq!(ev.changed_cell_count, 3);
        assert_eq!(ev.image, stroked);
        assert_eq!(ev.trigger, Trigger::Automatic);
        // chaining: the reference is now the captured image
        assert_eq!(det.reference(), Some(&stroked));
    }

    #[test]
    fn unstable_burst_is_discarded_and_motion_kept() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.notify_motion();
        src.frames = vec![
            with_rect(&blank(), 10, 10, 30, 60, 50),
            with_rect(&blank(), 30, 10, 30, 60, 50),
            with_rect(&blank(), 50, 10, 30, 60, 50),
        ];
        src.next = 0;
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::Unstable);
        assert!(det.motion_pending());
        assert_eq!(det.reference(), Some(&blank()));
    }

    #[test]
    fn dark_office_is_discarded() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.notify_motion();
        src.show(GrayImage::filled(W, H, 20));
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::TooDark);
    }

    #[test]
    fn chair_is_occlusion_drawing_is_not() {
        let cfg = CaptureConfig::default();
        let b = blank();
        assert!(!check_static_occlusion(&b, &b, &cfg));
        // solid block covering 25% of the board
        let chair = with_rect(&b, 40, 25, 80, 50, 70);
        assert!(check_static_occlusion(&chair, &b, &cfg));
        // a connected line drawing whose bounding box is the same 25%
        let mut drawing = b.clone();
        for x in 40..120 {
            for y in [25, 50, 74] {
                drawing.set(x, y, 40);
            }
        }
        for y in 25..75 {
            drawing.set(40, y, 40);
            drawing.set(119, y, 40);
        }
        assert!(!check_static_occlusion(&drawing, &b, &cfg));
        // a uniform lighting shift is not an occluder
        let brighter = GrayImage::from_fn(W, H, |x, y| b.get(x, y) + 30);
        assert!(!check_static_occlusion(&brighter, &b, &cfg));
    }

    #[test]
    fn occluded_attempt_keeps_reference() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.notify_motion();
        src.show(with_rect(&blank(), 40, 25, 80, 50, 70));
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::Occluded);
        assert!(det.motion_pending());
        assert_eq!(det.reference(), Some(&blank()));
    }

    #[test]
    fn source_failure_preserves_state() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.notify_motion();
        src.fail = true;
        assert!(matches!(det.attempt(&mut src, 10_000), Err(CaptureError::Source(_))));
        assert!(det.motion_pending());
    }

    #[test]
    fn motion_only_diffs_raw_images() {
        // a lighting offset below the pixel tolerance in raw luminance is
        // invisible without filtering
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::MotionOnly, &mut src);
        det.notify_motion();
        src.show(GrayImage::filled(W, H, 210));
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::BelowThreshold(0.0));
        det.notify_motion();
        src.show(GrayImage::filled(W, H, 230));
        assert!(matches!(det.attempt(&mut src, 20_000).unwrap(), AttemptOutcome::Captured(_)));
    }

    #[test]
    fn disabled_capture_tracks_silently() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.set_enabled(false);
        let private = with_rect(&blank(), 20, 30, 40, 10, 60);
        src.show(private.clone());
        det.notify_motion();
        assert_eq!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::Suppressed);
        assert!(matches!(det.manual_capture(&mut src, 15_000), Err(CaptureError::CaptureDisabled(_))));
        det.set_enabled(true);
        det.notify_motion();
        assert_eq!(det.attempt(&mut src, 20_000).unwrap(), AttemptOutcome::BelowThreshold(0.0));
        let next = with_rect(&private, 100, 60, 40, 10, 60);
        src.show(next);
        det.notify_motion();
        assert!(matches!(det.attempt(&mut src, 30_000).unwrap(), AttemptOutcome::Captured(_)));
    }

    #[test]
    fn manual_capture_bypasses_threshold() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        let ev = det.manual_capture(&mut src, 5_000).unwrap();
        assert_eq!(ev.trigger, Trigger::Manual);
        assert_eq!(ev.changed_cell_count, 0);

        // a scribble too small to pass the automatic threshold
        let scribble = with_rect(&blank(), 70, 45, 6, 2, 60);
        src.show(scribble.clone());
        det.notify_motion();
        assert!(matches!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::BelowThreshold(_)));
        let ev = det.manual_capture(&mut src, 11_000).unwrap();
        assert_eq!(ev.image, scribble);
        assert!(ev.changed_fraction > 0.0);
    }

    #[test]
    fn manual_capture_gives_up_when_obstructed() {
        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        src.show(with_rect(&blank(), 40, 25, 80, 50, 70));
        assert_eq!(det.manual_capture(&mut src, 5_000), Err(CaptureError::Obstructed(5)));
    }

    #[test]
    fn calibration_examples() {
        let cfg = CaptureConfig::default();
        let t = calibrate_threshold(W, H, 120, &cfg).unwrap();
        let response = calibration_response(W, H, 120, &cfg);
        assert!(t < response);
        assert!(matches!(calibrate_threshold(W, H, 0, &cfg), Err(CaptureError::ContrastTooLow(0))));

        let mut src = Scripted::still(blank());
        let mut det = bootstrapped(CaptureVariant::Combined, &mut src);
        det.cfg.change_threshold = t;
        det.notify_motion();
        assert!(matches!(det.attempt(&mut src, 10_000).unwrap(), AttemptOutcome::BelowThreshold(_)));
        // a 1/50-area mark: two side-by-side calibration squares
        let one = with_calibration_mark(&blank(), 120);
        let two = GrayImage::from_fn(W, H, |x, y| one.get(x, y).min(one.get((x + 13) % W, y)));
        src.show(two);
        det.notify_motion();
        assert!(matches!(det.attempt(&mut src, 20_000).unwrap(), AttemptOutcome::Captured(_)));
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in CaptureVariant::ALL {
            assert_eq!(v.name().parse::<CaptureVariant>().unwrap(), v);
        }
        assert!("both".parse::<CaptureVariant>().is_err());
        assert!(CaptureConfig::default().validate().is_ok());
        let bad = CaptureConfig {
            burst_size: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
