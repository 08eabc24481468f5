//! Pure image primitives used by the motion and capture detectors.
//!
//! Everything in here is a function of its inputs: no caching, no interior
//! state. Images are small owned buffers so they move freely between
//! per-camera workers.

mod components;
mod filter;
mod geometry;
mod grid;
mod png;

pub use components::{label_components, Component, Connectivity};
pub use filter::{high_pass, low_pass, stroke_filter};
pub use geometry::{board_to_frame, rectify, rectified_size, BoardGeometry, Homography, Point};
pub use grid::{cell_of, cell_start, grid_columns, region_grids, Grid, RegionGridSet, COARSE_ROWS, FINE_FACTOR};
pub use png::{decode_frame, decode_gray, encode_frame, encode_gray};

use thiserror::Error;

/// Per-pixel luminance tolerance used when nothing else is configured.
pub const DEFAULT_PIXEL_TOLERANCE: u8 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("buffer of {actual} bytes does not match {width}x{height}x{channels}")]
    BadBuffer {
        width: u32,
        height: u32,
        channels: u32,
        actual: usize,
    },
    #[error("degenerate board geometry: {0}")]
    DegenerateGeometry(String),
    #[error("cannot tile a {width}x{height} diff into {cols}x{rows} cells")]
    Untileable {
        width: u32,
        height: u32,
        cols: u32,
        rows: u32,
    },
    #[error("png: {0}")]
    Png(String),
}

/// A raw RGB camera sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    /// Milliseconds since the epoch.
    pub timestamp: i64,
}

impl RawFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp: i64) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || pixels.len() != width as usize * height as usize * 3 {
            return Err(ImagingError::BadBuffer {
                width,
                height,
                channels: 3,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
        })
    }

    /// Builds a neutral-colored RGB frame from a luminance image.
    pub fn from_gray(gray: &GrayImage, timestamp: i64) -> Self {
        let pixels = gray.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: gray.width,
            height: gray.height,
            pixels,
            timestamp,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Row-major 8-bit luminance image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || pixels.len() != width as usize * height as usize {
            return Err(ImagingError::BadBuffer {
                width,
                height,
                channels: 1,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut img = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }

    /// Pixel lookup with coordinates clamped to the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }

    /// Copies out the sub-rectangle `[x, x+w) x [y, y+h)`, clipped to the image.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Option<GrayImage> {
        let x1 = (x.saturating_add(w)).min(self.width);
        let y1 = (y.saturating_add(h)).min(self.height);
        if x >= x1 || y >= y1 {
            return None;
        }
        Some(GrayImage::from_fn(x1 - x, y1 - y, |cx, cy| self.get(x + cx, y + cy)))
    }
}

/// Per-pixel absolute difference between two equally sized images.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMap {
    width: u32,
    height: u32,
    diff: Vec<u8>,
    tolerance: u8,
    changed_fraction: f64,
}

impl DiffMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.diff
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.diff[y as usize * self.width as usize + x as usize]
    }

    /// Tolerance the changed fraction was computed with.
    pub fn tolerance(&self) -> u8 {
        self.tolerance
    }

    /// Fraction of pixels whose difference exceeds the tolerance.
    pub fn changed_fraction(&self) -> f64 {
        self.changed_fraction
    }

    pub fn changed_mask(&self, tolerance: u8) -> Vec<bool> {
        self.diff.iter().map(|&d| d > tolerance).collect()
    }
}

/// Luma conversion with the BT.601 weights, rounded half up.
pub fn to_grayscale(frame: &RawFrame) -> GrayImage {
    let pixels = frame
        .pixels
        .chunks_exact(3)
        .map(|rgb| {
            let sum = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
            ((sum + 500) / 1000) as u8
        })
        .collect();
    GrayImage {
        width: frame.width,
        height: frame.height,
        pixels,
    }
}

pub fn pixel_diff(a: &GrayImage, b: &GrayImage, tolerance: u8) -> Result<DiffMap, ImagingError> {
    if a.dimensions() != b.dimensions() {
        return Err(ImagingError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let mut changed = 0usize;
    let diff: Vec<u8> = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&p, &q)| {
            let d = p.abs_diff(q);
            if d > tolerance {
                changed += 1;
            }
            d
        })
        .collect();
    let changed_fraction = changed as f64 / diff.len() as f64;
    Ok(DiffMap {
        width: a.width,
        height: a.height,
        diff,
        tolerance,
        changed_fraction,
    })
}

pub fn mean_brightness(img: &GrayImage) -> f64 {
    let sum: u64 = img.pixels.iter().map(|&v| v as u64).sum();
    sum as f64 / img.pixels.len() as f64
}

/// Median luminance, used to factor out global lighting changes.
pub fn median_brightness(img: &GrayImage) -> u8 {
    let mut hist = [0usize; 256];
    for &v in &img.pixels {
        hist[v as usize] += 1;
    }
    let half = img.pixels.len().div_ceil(2);
    let mut seen = 0;
    for (v, &n) in hist.iter().enumerate() {
        seen += n;
        if seen >= half {
            return v as u8;
        }
    }
    255
}
