//! PNG encoding for fixtures, archived captures and replayed frames.

use std::io::Cursor;

use image::{DynamicImage, ImageFormat};

use super::{GrayImage, ImagingError, RawFrame};

fn png_err(e: image::ImageError) -> ImagingError {
    ImagingError::Png(e.to_string())
}

pub fn encode_gray(img: &GrayImage) -> Result<Vec<u8>, ImagingError> {
    let buf = image::GrayImage::from_raw(img.width(), img.height(), img.pixels().to_vec())
        .expect("GrayImage buffer length is an invariant");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(png_err)?;
    Ok(out.into_inner())
}

/// Decodes any 8-bit PNG to luminance.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(png_err)?;
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            let frame = rgb_frame(other, 0)?;
            return Ok(super::to_grayscale(&frame));
        }
    };
    let (w, h) = gray.dimensions();
    GrayImage::new(w, h, gray.into_raw())
}

pub fn encode_frame(frame: &RawFrame) -> Result<Vec<u8>, ImagingError> {
    let buf = image::RgbImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
        .expect("RawFrame buffer length is an invariant");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(png_err)?;
    Ok(out.into_inner())
}

/// Decodes an RGB or grayscale PNG into a camera frame stamped `timestamp`.
pub fn decode_frame(bytes: &[u8], timestamp: i64) -> Result<RawFrame, ImagingError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(png_err)?;
    rgb_frame(img, timestamp)
}

fn rgb_frame(img: DynamicImage, timestamp: i64) -> Result<RawFrame, ImagingError> {
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    RawFrame::new(w, h, rgb.into_raw(), timestamp)
}
