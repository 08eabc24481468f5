//! Rendering of scripted scenes into camera frames.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GroundTruth, Scenario, ScenarioError};
use crate::capture::{FrameSource, SourceError};
use crate::imaging::{board_to_frame, rectified_size, GrayImage, Point, RawFrame};

/// Sway period of a person standing in place, seconds.
const SWAY_PERIOD_S: f64 = 2.5;
/// Walker texture: side of the clothing blocks and their two luminances.
const TEXTURE_BLOCK: i64 = 4;
const TEXTURE: [u8; 2] = [50, 120];

/// Scene state that changes only at script events.
#[derive(Clone, Debug, PartialEq, Eq)]
struct StaticKey {
    applied: usize,
    occluders: Vec<bool>,
}

/// Frame generator for one scenario. Every frame is a pure function of the
/// scenario and the requested timestamp.
#[derive(Debug)]
pub struct SyntheticFeed {
    scenario: Scenario,
    canvas_size: (u32, u32),
    /// For every camera pixel, the board canvas position it sees, if any.
    board_lookup: Vec<Option<(f32, f32)>>,
    /// Strokes and erases in script order, as `(time_s, index, is_erase)`.
    script: Vec<(f64, usize, bool)>,
    cache: Option<(StaticKey, GrayImage)>,
}

impl SyntheticFeed {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let geometry = scenario.board.geometry();
        let out_h = scenario.board.out_height;
        let canvas_size = rectified_size(geometry.aspect_ratio, out_h);
        let to_frame = board_to_frame(&geometry, out_h).map_err(|e| ScenarioError::InvalidScript(e.to_string()))?;
        let to_board = to_frame
            .inverse()
            .ok_or_else(|| ScenarioError::InvalidScript("board transform is singular".into()))?;
        let (cw, ch) = (scenario.camera.width, scenario.camera.height);
        let (bw, bh) = (canvas_size.0 as f64, canvas_size.1 as f64);
        let board_lookup = (0..ch)
            .flat_map(|y| (0..cw).map(move |x| (x, y)))
            .map(|(x, y)| {
                let p = to_board.apply(Point::new(x as f64, y as f64))?;
                let inside = p.x >= -0.5 && p.y >= -0.5 && p.x <= bw - 0.5 && p.y <= bh - 0.5;
                inside.then_some((p.x as f32, p.y as f32))
            })
            .collect();
        let mut script: Vec<(f64, usize, bool)> = scenario
            .strokes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.at_s, i, false))
            .chain(scenario.erases.iter().enumerate().map(|(i, e)| (e.at_s, i, true)))
            .collect();
        script.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            scenario: scenario.clone(),
            canvas_size,
            board_lookup,
            script,
            cache: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.scenario.ground_truth()
    }

    /// The bare board (strokes and erases applied, no occluders) at `t_ms`,
    /// at the scenario's rectified working size.
    pub fn board_canvas(&self, t_ms: i64) -> GrayImage {
        let t_s = self.seconds(t_ms);
        let applied = self.script.iter().take_while(|e| e.0 <= t_s).count();
        self.canvas(applied)
    }

    fn seconds(&self, t_ms: i64) -> f64 {
        (t_ms - self.scenario.start_ms) as f64 / 1000.0
    }

    fn canvas(&self, applied: usize) -> GrayImage {
        let s = &self.scenario;
        let (w, h) = self.canvas_size;
        let mut canvas = GrayImage::filled(w, h, s.board.background);
        for &(_, idx, is_erase) in &self.script[..applied] {
            if is_erase {
                let r = s.erases[idx].region;
                fill_rect(&mut canvas, r, s.board.background);
            } else {
                let stroke = &s.strokes[idx];
                let ink = s.board.background.saturating_sub(stroke.contrast);
                let pts: Vec<(f64, f64)> = stroke
                    .points
                    .iter()
                    .map(|p| (p[0] * (w as f64 - 1.0), p[1] * (h as f64 - 1.0)))
                    .collect();
                for seg in pts.windows(2) {
                    draw_segment(&mut canvas, seg[0], seg[1], stroke.width, ink);
                }
            }
        }
        canvas
    }

    /// Wall and board (with occluders) in camera space, before walkers,
    /// lighting and noise.
    fn static_layer(&mut self, t_s: f64) -> &GrayImage {
        let key = StaticKey {
            applied: self.script.iter().take_while(|e| e.0 <= t_s).count(),
            occluders: self.scenario.occluders.iter().map(|o| o.present_at(t_s)).collect(),
        };
        if self.cache.as_ref().is_none_or(|(k, _)| *k != key) {
            let mut canvas = self.canvas(key.applied);
            for (o, _) in self.scenario.occluders.iter().zip(&key.occluders).filter(|(_, on)| **on) {
                fill_rect(&mut canvas, o.rect, o.value);
            }
            let cam = &self.scenario.camera;
            let mut layer = GrayImage::filled(cam.width, cam.height, cam.wall);
            for (px, lookup) in layer.pixels_mut().iter_mut().zip(&self.board_lookup) {
                if let Some((u, v)) = lookup {
                    *px = bilinear(&canvas, *u as f64, *v as f64);
                }
            }
            self.cache = Some((key, layer));
        }
        &self.cache.as_ref().expect("filled above").1
    }

    pub fn render(&mut self, t_ms: i64) -> RawFrame {
        let t_s = self.seconds(t_ms);
        let mut frame = self.static_layer(t_s).clone();
        let s = &self.scenario;
        for (i, walker) in s.walkers.iter().enumerate() {
            if let Some((cx, cy)) = walker_center(walker, t_s, i) {
                draw_walker(&mut frame, cx, cy, walker.size);
            }
        }
        let light: f64 = s.lighting.iter().map(|l| l.offset_at(t_s)).sum();
        let light = light.round() as i32;
        let noise = s.camera.noise as i32;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ (t_ms as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for px in frame.pixels_mut() {
            let jitter = if noise > 0 { rng.gen_range(-noise..=noise) } else { 0 };
            *px = (*px as i32 + light + jitter).clamp(0, 255) as u8;
        }
        RawFrame::from_gray(&frame, t_ms)
    }
}

impl FrameSource for SyntheticFeed {
    fn grab(&mut self, timestamp: i64) -> Result<RawFrame, SourceError> {
        Ok(self.render(timestamp))
    }
}

/// Linearly interpolated position plus sway, or `None` when absent.
fn walker_center(w: &super::Walker, t_s: f64, index: usize) -> Option<(f64, f64)> {
    if !w.present_at(t_s) {
        return None;
    }
    let seg = w.path.windows(2).find(|p| p[0][0] <= t_s && t_s <= p[1][0])?;
    let (a, b) = (seg[0], seg[1]);
    let u = (t_s - a[0]) / (b[0] - a[0]);
    let phase = TAU * t_s / SWAY_PERIOD_S + index as f64 * 1.7;
    Some((
        a[1] + u * (b[1] - a[1]) + w.sway * phase.cos(),
        a[2] + u * (b[2] - a[2]) + w.sway * phase.sin(),
    ))
}

/// Person-sized rectangle with a blocky pseudo-random texture that moves
/// with the body; unlike a checkerboard it is not invariant under any shift.
fn draw_walker(frame: &mut GrayImage, cx: f64, cy: f64, size: [u32; 2]) {
    let x0 = (cx - size[0] as f64 / 2.0).round() as i64;
    let y0 = (cy - size[1] as f64 / 2.0).round() as i64;
    let (fw, fh) = (frame.width() as i64, frame.height() as i64);
    for ly in 0..size[1] as i64 {
        let y = y0 + ly;
        if !(0..fh).contains(&y) {
            continue;
        }
        for lx in 0..size[0] as i64 {
            let x = x0 + lx;
            if !(0..fw).contains(&x) {
                continue;
            }
            let h = (lx / TEXTURE_BLOCK).wrapping_mul(0x1F1F_1F1F) ^ (ly / TEXTURE_BLOCK).wrapping_mul(0x2545_F491);
            let bit = (h.wrapping_mul(0x9E37_79B9) >> 17) & 1;
            frame.set(x as u32, y as u32, TEXTURE[bit as usize]);
        }
    }
}

fn fill_rect(img: &mut GrayImage, r: [f64; 4], value: u8) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = (r[0] * w).floor() as u32;
    let y0 = (r[1] * h).floor() as u32;
    let x1 = ((r[2] * w).ceil() as u32).min(img.width());
    let y1 = ((r[3] * h).ceil() as u32).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            img.set(x, y, value);
        }
    }
}

/// Paints every pixel whose center lies within `width / 2` of the segment.
fn draw_segment(img: &mut GrayImage, a: (f64, f64), b: (f64, f64), width: f64, ink: u8) {
    let r = width / 2.0;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let xmin = (a.0.min(b.0) - r).floor().max(0.0) as u32;
    let ymin = (a.1.min(b.1) - r).floor().max(0.0) as u32;
    let xmax = ((a.0.max(b.0) + r).ceil() as u32).min(img.width() - 1);
    let ymax = ((a.1.max(b.1) + r).ceil() as u32).min(img.height() - 1);
    for y in ymin..=ymax {
        for x in xmin..=xmax {
            let (px, py) = (x as f64, y as f64);
            let u = if len2 == 0.0 {
                0.0
            } else {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            };
            let (qx, qy) = (a.0 + u * dx, a.1 + u * dy);
            if (px - qx).powi(2) + (py - qy).powi(2) <= r * r {
                img.set(x, y, img.get(x, y).min(ink));
            }
        }
    }
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> u8 {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let p = |dx: i64, dy: i64| img.get_clamped(x0 + dx, y0 + dy) as f64;
    let top = p(0, 0) * (1.0 - fx) + p(1, 0) * fx;
    let bottom = p(0, 1) * (1.0 - fx) + p(1, 1) * fx;
    (top * (1.0 - fy) + bottom * fy).round() as u8
}
