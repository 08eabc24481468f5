//! The two 3x3 kernels applied before content diffs.
//!
//! Borders use edge replication so output dimensions match the input.

use super::GrayImage;

/// Convolves with `{0,-1,0; -1,k,-1; 0,-1,0}`, rounding and clamping to `[0, 255]`.
///
/// With `k > 4` a flat region of value `v` maps to `v * (k - 4)`, so values of
/// `k` close to 4 flatten the board while keeping stroke edges.
pub fn high_pass(img: &GrayImage, k: f64) -> GrayImage {
    let (w, h) = img.dimensions();
    let mut out = GrayImage::filled(w, h, 0);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let center = img.get_clamped(x, y) as f64;
            let cross = img.get_clamped(x, y - 1) as i32
                + img.get_clamped(x - 1, y) as i32
                + img.get_clamped(x + 1, y) as i32
                + img.get_clamped(x, y + 1) as i32;
            let v = (k * center - cross as f64).round().clamp(0.0, 255.0);
            out.set(x as u32, y as u32, v as u8);
        }
    }
    out
}

/// 3x3 box blur rounded to the nearest integer.
pub fn low_pass(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let mut out = GrayImage::filled(w, h, 0);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut sum = 0u32;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    sum += img.get_clamped(x + dx, y + dy) as u32;
                }
            }
            // sum / 9 is never exactly n + 0.5, so this is round-to-nearest.
            out.set(x as u32, y as u32, ((sum + 4) / 9) as u8);
        }
    }
    out
}

/// High pass followed by low pass: the representation content diffs run on.
pub fn stroke_filter(img: &GrayImage, k: f64) -> GrayImage {
    low_pass(&high_pass(img, k))
}
