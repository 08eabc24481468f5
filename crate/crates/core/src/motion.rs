//! Frame-to-frame motion analysis and person counting.
//!
//! Pixel motion is thresholded into a mask, grouped into rectilinear blobs
//! (8-connected components, then overlapping boxes merged to a fixed point)
//! and the blobs inside a person-sized area band are counted. There is no
//! tracking: a blob is simply assumed to be someone between camera and board.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ids::CameraId;
use crate::imaging::{
    label_components, pixel_diff, to_grayscale, Connectivity, GrayImage, ImagingError, RawFrame,
    DEFAULT_PIXEL_TOLERANCE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Fraction of changed pixels above which blob analysis runs.
    pub motion_gate: f64,
    /// Person-size band, as fractions of the frame area.
    pub min_blob_area: f64,
    pub max_blob_area: f64,
    pub pixel_tolerance: u8,
    /// Frames between the two images being differenced (1 = consecutive).
    pub aggregation_frames: u32,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            motion_gate: 0.05,
            min_blob_area: 0.015,
            max_blob_area: 0.45,
            pixel_tolerance: DEFAULT_PIXEL_TOLERANCE,
            aggregation_frames: 1,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.motion_gate > 0.0 && self.motion_gate < 1.0) {
            return Err(format!("motion_gate {} outside (0, 1)", self.motion_gate));
        }
        if !(self.min_blob_area > 0.0 && self.min_blob_area < self.max_blob_area && self.max_blob_area <= 1.0) {
            return Err(format!(
                "blob band [{}, {}] must satisfy 0 < min < max <= 1",
                self.min_blob_area, self.max_blob_area
            ));
        }
        if self.aggregation_frames == 0 {
            return Err("aggregation_frames must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-analyzed-frame output of the motion detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub camera_id: CameraId,
    pub timestamp: i64,
    pub changed_fraction: f64,
    pub person_count: u32,
}

/// Boolean per-pixel exceedance map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl MotionMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A rectilinear motion region; `area` counts mask pixels, not box pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub area: u32,
}

impl Blob {
    fn x1(&self) -> u32 {
        self.x + self.w
    }

    fn y1(&self) -> u32 {
        self.y + self.h
    }

    /// True when the two boxes share at least one pixel.
    pub fn overlaps(&self, other: &Blob) -> bool {
        self.x < other.x1() && other.x < self.x1() && self.y < other.y1() && other.y < self.y1()
    }

    pub fn union(&self, other: &Blob) -> Blob {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        Blob {
            x,
            y,
            w: self.x1().max(other.x1()) - x,
            h: self.y1().max(other.y1()) - y,
            area: self.area + other.area,
        }
    }
}

/// Differences two frames; returns the changed fraction and the exceedance mask.
pub fn frame_motion(
    prev: &GrayImage,
    cur: &GrayImage,
    cfg: &MotionConfig,
) -> Result<(f64, MotionMask), ImagingError> {
    let diff = pixel_diff(prev, cur, cfg.pixel_tolerance)?;
    let mask = MotionMask {
        width: diff.width(),
        height: diff.height(),
        bits: diff.changed_mask(cfg.pixel_tolerance),
    };
    Ok((diff.changed_fraction(), mask))
}

/// Merges overlapping boxes transitively into their joint bounding boxes.
/// The result is pairwise non-overlapping.
pub fn merge_overlapping(blobs: Vec<Blob>) -> Vec<Blob> {
    let mut out: Vec<Blob> = Vec::with_capacity(blobs.len());
    for blob in blobs {
        let mut cur = blob;
        let mut i = 0;
        while i < out.len() {
            if out[i].overlaps(&cur) {
                cur = cur.union(&out.swap_remove(i));
                i = 0;
            } else {
                i += 1;
            }
        }
        out.push(cur);
    }
    out.sort_by_key(|b| (b.y, b.x));
    out
}

pub fn extract_blobs(mask: &MotionMask, cfg: &MotionConfig) -> Vec<Blob> {
    let comps = label_components(mask.width, mask.height, &mask.bits, Connectivity::Eight);
    let boxes = comps
        .into_iter()
        .map(|c| Blob {
            x: c.min_x,
            y: c.min_y,
            w: c.width(),
            h: c.height(),
            area: c.area,
        })
        .collect();
    let frame_area = mask.width as f64 * mask.height as f64;
    let (lo, hi) = (cfg.min_blob_area * frame_area, cfg.max_blob_area * frame_area);
    merge_overlapping(boxes)
        .into_iter()
        .filter(|b| (lo..=hi).contains(&(b.area as f64)))
        .collect()
}

pub fn estimate_person_count(blobs: &[Blob]) -> u32 {
    blobs.len() as u32
}

/// Stateful per-camera motion detector: background = the frame
/// `aggregation_frames` analyzed frames ago.
#[derive(Debug)]
pub struct MotionDetector {
    camera_id: CameraId,
    cfg: MotionConfig,
    history: VecDeque<GrayImage>,
}

impl MotionDetector {
    pub fn new(camera_id: CameraId, cfg: MotionConfig) -> Self {
        Self {
            camera_id,
            cfg,
            history: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &MotionConfig {
        &self.cfg
    }

    /// Whether a sample should raise a motion notification.
    pub fn gate_open(&self, sample: &MotionSample) -> bool {
        sample.changed_fraction > self.cfg.motion_gate
    }

    /// Analyzes one frame. The first frame (and a frame whose size changed)
    /// only seeds the background and reports no motion.
    pub fn process(&mut self, frame: &RawFrame) -> MotionSample {
        let gray = to_grayscale(frame);
        if self.history.back().is_some_and(|g| g.dimensions() != gray.dimensions()) {
            self.history.clear();
        }
        let lag = self.cfg.aggregation_frames as usize;
        let mut sample = MotionSample {
            camera_id: self.camera_id,
            timestamp: frame.timestamp,
            changed_fraction: 0.0,
            person_count: 0,
        };
        if let Some(background) = self.history.front().filter(|_| self.history.len() >= lag) {
            let (fraction, mask) =
                frame_motion(background, &gray, &self.cfg).expect("dimensions checked above");
            sample.changed_fraction = fraction;
            if fraction > self.cfg.motion_gate {
                sample.person_count = estimate_person_count(&extract_blobs(&mask, &self.cfg));
            }
        }
        self.history.push_back(gray);
        while self.history.len() > lag {
            self.history.pop_front();
        }
        sample
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_rects(w: u32, h: u32, rects: &[(u32, u32, u32, u32)], fg: u8) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            if rects
                .iter()
                .any(|&(rx, ry, rw, rh)| (rx..rx + rw).contains(&x) && (ry..ry + rh).contains(&y))
            {
                fg
            } else {
                200
            }
        })
    }

    fn mask_of(w: u32, h: u32, rects: &[(u32, u32, u32, u32)]) -> MotionMask {
        let mut m = MotionMask::empty(w, h);
        for &(rx, ry, rw, rh) in rects {
            for y in ry..ry + rh {
                for x in rx..rx + rw {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[test]
    fn identical_frames_have_no_motion() {
        let a = with_rects(40, 30, &[(3, 3, 5, 5)], 20);
        let (f, mask) = frame_motion(&a, &a, &MotionConfig::default()).unwrap();
        assert_eq!(f, 0.0);
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn six_percent_change_opens_gate() {
        let a = GrayImage::filled(100, 100, 200);
        let b = with_rects(100, 100, &[(0, 0, 60, 10)], 20);
        let (f, _) = frame_motion(&a, &b, &MotionConfig::default()).unwrap();
        assert!((f - 0.06).abs() < 1e-12);
        assert!(f > MotionConfig::default().motion_gate);
    }

    #[test]
    fn moved_walker_mask_is_symmetric_difference() {
        let before = with_rects(120, 80, &[(10, 20, 30, 40)], 30);
        let after = with_rects(120, 80, &[(30, 20, 30, 40)], 30);
        let (_, mask) = frame_motion(&before, &after, &MotionConfig::default()).unwrap();
        for y in 0..80 {
            for x in 0..120 {
                let in_a = (10..40).contains(&x) && (20..60).contains(&y);
                let in_b = (30..60).contains(&x) && (20..60).contains(&y);
                assert_eq!(mask.get(x, y), in_a ^ in_b, "({x},{y})");
            }
        }
    }

    #[test]
    fn blobs_disjoint_overlapping_and_empty() {
        let cfg = MotionConfig::default();
        assert!(extract_blobs(&MotionMask::empty(100, 100), &cfg).is_empty());

        let two = mask_of(100, 100, &[(5, 5, 20, 40), (60, 10, 20, 40)]);
        let blobs = extract_blobs(&two, &cfg);
        assert_eq!(blobs.len(), 2);
        assert_eq!(estimate_person_count(&blobs), 2);

        // an L and a square in its crook: boxes overlap, pixels never touch
        let l = mask_of(100, 100, &[(10, 10, 30, 6), (10, 10, 6, 30), (22, 22, 20, 20)]);
        let merged = extract_blobs(&l, &cfg);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].x, merged[0].y, merged[0].w, merged[0].h), (10, 10, 32, 32));
        assert_eq!(merged[0].area, 30 * 6 + 6 * 30 - 36 + 20 * 20);
    }

    #[test]
    fn size_band_filters_specks_and_floods() {
        let cfg = MotionConfig::default();
        let specks = mask_of(100, 100, &[(5, 5, 2, 2), (50, 50, 3, 3)]);
        assert!(extract_blobs(&specks, &cfg).is_empty());
        let flood = mask_of(100, 100, &[(0, 0, 100, 90)]);
        assert!(extract_blobs(&flood, &cfg).is_empty());
    }

    #[test]
    fn detector_gates_counting() {
        let cfg = MotionConfig::default();
        let mut det = MotionDetector::new(CameraId(1), cfg.clone());
        let bg = GrayImage::filled(100, 100, 200);
        let first = det.process(&RawFrame::from_gray(&bg, 0));
        assert_eq!((first.changed_fraction, first.person_count), (0.0, 0));
        // a 3% speck-free change stays below the gate: no count even though
        // the rectangle alone would be person sized
        let small = with_rects(100, 100, &[(10, 10, 15, 20)], 20);
        let s = det.process(&RawFrame::from_gray(&small, 100));
        assert!(s.changed_fraction <= cfg.motion_gate);
        assert_eq!(s.person_count, 0);
        assert!(!det.gate_open(&s));
        let big = with_rects(100, 100, &[(10, 10, 15, 20), (60, 20, 20, 40)], 20);
        let s = det.process(&RawFrame::from_gray(&big, 200));
        assert!(det.gate_open(&s));
        assert_eq!(s.person_count, 1);
    }

    #[test]
    fn aggregation_window_differences_older_frame() {
        let cfg = MotionConfig {
            aggregation_frames: 3,
            ..MotionConfig::default()
        };
        let mut det = MotionDetector::new(CameraId(2), cfg);
        let frames: Vec<GrayImage> = (0..5)
            .map(|i| with_rects(100, 100, &[(i * 4, 0, 4, 100)], 10))
            .collect();
        let samples: Vec<_> = frames
            .iter()
            .enumerate()
            .map(|(i, f)| det.process(&RawFrame::from_gray(f, i as i64)))
            .collect();
        assert!(samples[..3].iter().all(|s| s.changed_fraction == 0.0));
        // frame 3 vs frame 0: two disjoint 4-px strips changed
        assert!((samples[3].changed_fraction - 0.08).abs() < 1e-12);
    }
}
