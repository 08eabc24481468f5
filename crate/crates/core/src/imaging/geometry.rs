//! Four-point perspective rectification of the board region.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{to_grayscale, GrayImage, ImagingError, RawFrame};

/// Minimum |sin| of the turn at each corner; anything flatter is treated as
/// collinear and makes the projective solve ill-conditioned.
const MIN_CORNER_SINE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

/// Installation-time calibration of where the board sits in the camera image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardGeometry {
    /// Top-left, top-right, bottom-right, bottom-left, in raw frame pixels.
    pub corners: [Point; 4],
    /// Board width divided by board height.
    pub aspect_ratio: f64,
}

impl BoardGeometry {
    pub fn new(corners: [Point; 4], aspect_ratio: f64) -> Self {
        Self {
            corners,
            aspect_ratio,
        }
    }

    /// Checks the corner quadrilateral is strictly convex, clockwise in image
    /// coordinates (y down), and not close to collinear anywhere.
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.aspect_ratio.is_finite() && self.aspect_ratio > 0.0) {
            return Err(ImagingError::DegenerateGeometry(format!(
                "aspect ratio {} must be positive",
                self.aspect_ratio
            )));
        }
        if self.corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(ImagingError::DegenerateGeometry("non-finite corner".into()));
        }
        for i in 0..4 {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let c = self.corners[(i + 2) % 4];
            let (e1x, e1y) = (b.x - a.x, b.y - a.y);
            let (e2x, e2y) = (c.x - b.x, c.y - b.y);
            let l1 = e1x.hypot(e1y);
            let l2 = e2x.hypot(e2y);
            if l1 < 1e-9 || l2 < 1e-9 {
                return Err(ImagingError::DegenerateGeometry(format!("repeated corner {}", (i + 1) % 4)));
            }
            let sine = (e1x * e2y - e1y * e2x) / (l1 * l2);
            if sine < MIN_CORNER_SINE {
                return Err(ImagingError::DegenerateGeometry(format!(
                    "corner {} is reflex, flat or out of order (sin {sine:.4})",
                    (i + 1) % 4
                )));
            }
        }
        Ok(())
    }
}

/// A projective transform of the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    /// Solves for the transform taking each `src[i]` to `dst[i]`.
    pub fn from_correspondences(src: &[Point; 4], dst: &[Point; 4]) -> Option<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = (src[i].x, src[i].y);
            let (u, v) = (dst[i].x, dst[i].y);
            let r = 2 * i;
            a[(r, 0)] = x;
            a[(r, 1)] = y;
            a[(r, 2)] = 1.0;
            a[(r, 6)] = -x * u;
            a[(r, 7)] = -y * u;
            b[r] = u;
            a[(r + 1, 3)] = x;
            a[(r + 1, 4)] = y;
            a[(r + 1, 5)] = 1.0;
            a[(r + 1, 6)] = -x * v;
            a[(r + 1, 7)] = -y * v;
            b[r + 1] = v;
        }
        let h = a.lu().solve(&b)?;
        if h.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)))
    }

    pub fn apply(&self, p: Point) -> Option<Point> {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() < 1e-12 {
            return None;
        }
        Some(Point::new(v.x / v.z, v.y / v.z))
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.try_inverse().map(Self)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Output size of a rectified board: `round(aspect * height) x height`.
pub fn rectified_size(aspect_ratio: f64, out_height: u32) -> (u32, u32) {
    ((aspect_ratio * out_height as f64).round() as u32, out_height)
}

/// Output-corner positions that the board corners map onto (pixel centers).
pub(crate) fn output_corners(width: u32, height: u32) -> [Point; 4] {
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    [Point::new(0.0, 0.0), Point::new(w, 0.0), Point::new(w, h), Point::new(0.0, h)]
}

/// The transform from rectified output pixels back into raw frame pixels.
pub fn board_to_frame(geometry: &BoardGeometry, out_height: u32) -> Result<Homography, ImagingError> {
    geometry.validate()?;
    let (w, h) = rectified_size(geometry.aspect_ratio, out_height);
    if w < 2 || h < 2 {
        return Err(ImagingError::DegenerateGeometry(format!("output {w}x{h} too small")));
    }
    Homography::from_correspondences(&output_corners(w, h), &geometry.corners)
        .ok_or_else(|| ImagingError::DegenerateGeometry("singular projective system".into()))
}

/// Warps the board quadrilateral to an axis-aligned grayscale image of
/// `round(aspect * out_height) x out_height`, cropping everything outside it.
pub fn rectify(frame: &RawFrame, geometry: &BoardGeometry, out_height: u32) -> Result<GrayImage, ImagingError> {
    let to_frame = board_to_frame(geometry, out_height)?;
    let gray = to_grayscale(frame);
    let (w, h) = rectified_size(geometry.aspect_ratio, out_height);
    let m = to_frame.matrix();
    let mut out = GrayImage::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let z = m[(2, 0)] * xf + m[(2, 1)] * yf + m[(2, 2)];
            let sx = (m[(0, 0)] * xf + m[(0, 1)] * yf + m[(0, 2)]) / z;
            let sy = (m[(1, 0)] * xf + m[(1, 1)] * yf + m[(1, 2)]) / z;
            out.set(x, y, bilinear(&gray, sx, sy));
        }
    }
    Ok(out)
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> u8 {
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let y = y.clamp(0.0, (img.height() - 1) as f64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img.get_clamped(x0, y0) as f64;
    let p10 = img.get_clamped(x0 + 1, y0) as f64;
    let p01 = img.get_clamped(x0, y0 + 1) as f64;
    let p11 = img.get_clamped(x0 + 1, y0 + 1) as f64;
    let top = p00 + (p10 - p00) * fx;
    let bottom = p01 + (p11 - p01) * fx;
    (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_geometry(x0: f64, y0: f64, x1: f64, y1: f64, aspect: f64) -> BoardGeometry {
        BoardGeometry::new(
            [Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)],
            aspect,
        )
    }

    #[test]
    fn output_width_follows_aspect() {
        assert_eq!(rectified_size(1.6, 100), (160, 100));
        let frame = RawFrame::from_gray(&GrayImage::filled(200, 150, 90), 0);
        let out = rectify(&frame, &rect_geometry(10.0, 10.0, 170.0, 110.0, 1.6), 100).unwrap();
        assert_eq!(out.dimensions(), (160, 100));
    }

    #[test]
    fn axis_aligned_rectangle_is_a_crop() {
        let src = GrayImage::from_fn(120, 90, |x, y| ((x * 3 + y * 5) % 251) as u8);
        let frame = RawFrame::from_gray(&src, 0);
        // 64x40 board starting at (20, 30); out height 40 keeps the scale at 1
        let geo = rect_geometry(20.0, 30.0, 83.0, 69.0, 1.6);
        let out = rectify(&frame, &geo, 40).unwrap();
        assert_eq!(out.dimensions(), (64, 40));
        for y in 0..40 {
            for x in 0..64 {
                assert_eq!(out.get(x, y), src.get(x + 20, y + 30));
            }
        }
    }

    #[test]
    fn corners_map_to_output_corners() {
        let geo = BoardGeometry::new(
            [Point::new(40.0, 30.0), Point::new(290.0, 45.0), Point::new(280.0, 200.0), Point::new(30.0, 190.0)],
            1.6,
        );
        let h = board_to_frame(&geo, 100).unwrap();
        for (out, corner) in output_corners(160, 100).iter().zip(&geo.corners) {
            let p = h.apply(*out).unwrap();
            assert!(p.dist(*corner) < 1e-6);
        }
        let back = h.inverse().unwrap();
        let p = back.apply(geo.corners[2]).unwrap();
        assert!(p.dist(Point::new(159.0, 99.0)) < 1e-6);
    }

    #[test]
    fn rejects_degenerate_quads() {
        let collinear = BoardGeometry::new(
            [Point::new(0.0, 0.0), Point::new(50.0, 0.0), Point::new(100.0, 0.0), Point::new(0.0, 50.0)],
            1.0,
        );
        assert!(matches!(collinear.validate(), Err(ImagingError::DegenerateGeometry(_))));
        let bowtie = BoardGeometry::new(
            [Point::new(0.0, 0.0), Point::new(100.0, 100.0), Point::new(100.0, 0.0), Point::new(0.0, 100.0)],
            1.0,
        );
        assert!(bowtie.validate().is_err());
        let reflex = BoardGeometry::new(
            [Point::new(0.0, 0.0), Point::new(100.0, 0.0), Point::new(30.0, 30.0), Point::new(0.0, 100.0)],
            1.0,
        );
        assert!(reflex.validate().is_err());
        let frame = RawFrame::from_gray(&GrayImage::filled(10, 10, 0), 0);
        assert!(rectify(&frame, &reflex, 10).is_err());
        let bad_aspect = rect_geometry(0.0, 0.0, 9.0, 9.0, 0.0);
        assert!(rectify(&frame, &bad_aspect, 10).is_err());
    }
}
