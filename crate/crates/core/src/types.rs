//! Shared domain types: calibrated frames, radar points, projected points and
//! instance masks.

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Determinant magnitude below which the intrinsic matrix counts as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("intrinsic matrix is singular (|det| = {det:e})")]
    SingularIntrinsic { det: f64 },
    #[error("extrinsic bottom row must be exactly (0, 0, 0, 1), got {row:?}")]
    ExtrinsicBottomRow { row: [f64; 4] },
    #[error("calibration matrix contains a non-finite entry")]
    NonFiniteMatrix,
    #[error("point {index} has non-finite coordinates")]
    NonFinitePoint { index: usize },
    #[error("point {index} carries {got} attributes but the schema has {expected}")]
    SchemaMismatch { index: usize, expected: usize, got: usize },
    #[error("attribute name `{0}` is reserved or duplicated")]
    BadAttributeName(String),
    #[error("mask for instance {instance_id} has no true pixel")]
    EmptyMask { instance_id: u32 },
    #[error("instance id must be positive")]
    ZeroInstanceId,
    #[error("mask raster holds {got} pixels, expected {expected}")]
    MaskSize { expected: usize, got: usize },
}

/// A radar return: Cartesian position in the radar frame plus attribute values
/// ordered by the owning frame's schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub attrs: Vec<f64>,
}

impl RadarPoint {
    pub fn new(x: f64, y: f64, z: f64, attrs: Vec<f64>) -> Self {
        Self { x, y, z, attrs }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Camera model for one capture: raster size, 3x3 intrinsic and 4x4
/// radar-to-camera extrinsic.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    image_width: u32,
    image_height: u32,
    intrinsic: Matrix3<f64>,
    extrinsic: Matrix4<f64>,
}

impl Calibration {
    pub fn new(
        image_width: u32,
        image_height: u32,
        intrinsic: Matrix3<f64>,
        extrinsic: Matrix4<f64>,
    ) -> Result<Self, FrameError> {
        if image_width == 0 || image_height == 0 {
            return Err(FrameError::EmptyImage {
                width: image_width,
                height: image_height,
            });
        }
        if intrinsic.iter().chain(extrinsic.iter()).any(|v| !v.is_finite()) {
            return Err(FrameError::NonFiniteMatrix);
        }
        let det = intrinsic.determinant();
        if det.abs() <= SINGULAR_EPS {
            return Err(FrameError::SingularIntrinsic { det });
        }
        let row = [extrinsic[(3, 0)], extrinsic[(3, 1)], extrinsic[(3, 2)], extrinsic[(3, 3)]];
        if row != [0.0, 0.0, 0.0, 1.0] {
            return Err(FrameError::ExtrinsicBottomRow { row });
        }
        Ok(Self {
            image_width,
            image_height,
            intrinsic,
            extrinsic,
        })
    }

    /// Identity intrinsic and extrinsic.
    pub fn identity(image_width: u32, image_height: u32) -> Result<Self, FrameError> {
        Self::new(image_width, image_height, Matrix3::identity(), Matrix4::identity())
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.image_width, self.image_height)
    }

    pub fn intrinsic(&self) -> &Matrix3<f64> {
        &self.intrinsic
    }

    pub fn extrinsic(&self) -> &Matrix4<f64> {
        &self.extrinsic
    }
}

/// One capture instant: calibration, attribute schema and radar points.
///
/// The schema names the attributes carried after `x, y, z`; every point holds
/// exactly one value per schema entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedFrame {
    calibration: Calibration,
    schema: Vec<String>,
    points: Vec<RadarPoint>,
}

impl CalibratedFrame {
    pub fn new(calibration: Calibration, schema: Vec<String>, points: Vec<RadarPoint>) -> Result<Self, FrameError> {
        let mut seen = std::collections::HashSet::new();
        for name in &schema {
            if matches!(name.as_str(), "x" | "y" | "z") || name.is_empty() || !seen.insert(name.as_str()) {
                return Err(FrameError::BadAttributeName(name.clone()));
            }
        }
        for (index, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(FrameError::NonFinitePoint { index });
            }
            if p.attrs.len() != schema.len() {
                return Err(FrameError::SchemaMismatch {
                    index,
                    expected: schema.len(),
                    got: p.attrs.len(),
                });
            }
        }
        Ok(Self {
            calibration,
            schema,
            points,
        })
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn points(&self) -> &[RadarPoint] {
        &self.points
    }

    pub fn image_width(&self) -> u32 {
        self.calibration.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.calibration.image_height
    }

    /// Returns a new frame with the same calibration and schema and `extra`
    /// appended after the existing points.
    pub fn with_appended(&self, extra: Vec<RadarPoint>) -> Result<Self, FrameError> {
        let mut points = self.points.clone();
        points.extend(extra);
        Self::new(self.calibration.clone(), self.schema.clone(), points)
    }
}

/// A radar point mapped into the image: pixel position, depth along the
/// camera axis, and the index of the originating frame point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    pub d: f64,
    pub source_index: usize,
}

/// Binary raster marking one object instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    instance_id: u32,
    width: u32,
    height: u32,
    pixels: Vec<bool>,
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub min_col: u32,
    pub min_row: u32,
    pub max_col: u32,
    pub max_row: u32,
}

impl PixelBox {
    pub fn width(&self) -> u32 {
        self.max_col - self.min_col + 1
    }

    pub fn height(&self) -> u32 {
        self.max_row - self.min_row + 1
    }

    /// Whether `(u, v)` lies inside the box grown by `margin` pixels.
    pub fn contains_dilated(&self, u: f64, v: f64, margin: f64) -> bool {
        u >= self.min_col as f64 - margin
            && u <= self.max_col as f64 + margin
            && v >= self.min_row as f64 - margin
            && v <= self.max_row as f64 + margin
    }
}

impl InstanceMask {
    /// Builds a mask from a row-major raster of `width * height` pixels.
    pub fn new(instance_id: u32, width: u32, height: u32, pixels: Vec<bool>) -> Result<Self, FrameError> {
        if instance_id == 0 {
            return Err(FrameError::ZeroInstanceId);
        }
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(FrameError::MaskSize {
                expected,
                got: pixels.len(),
            });
        }
        if !pixels.iter().any(|&p| p) {
            return Err(FrameError::EmptyMask { instance_id });
        }
        Ok(Self {
            instance_id,
            width,
            height,
            pixels,
        })
    }

    /// Axis-aligned rectangle mask covering columns `c0..=c1` and rows `r0..=r1`.
    pub fn rectangle(
        instance_id: u32,
        width: u32,
        height: u32,
        (c0, r0): (u32, u32),
        (c1, r1): (u32, u32),
    ) -> Result<Self, FrameError> {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| c >= c0 && c <= c1 && r >= r0 && r <= r1))
            .collect();
        Self::new(instance_id, width, height, pixels)
    }

    pub fn instance_id(&self) -> u32 {
        self.instance_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        col < self.width && row < self.height && self.pixels[row as usize * self.width as usize + col as usize]
    }

    /// Nearest-pixel membership of a real-valued image position. Positions
    /// outside `[-0.5, dim - 0.5)` round off the raster and are not members,
    /// except that retained projections in `[dim - 0.5, dim)` snap to the last
    /// pixel.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        match self.nearest_pixel(u, v) {
            Some((c, r)) => self.get(c, r),
            None => false,
        }
    }

    fn nearest_pixel(&self, u: f64, v: f64) -> Option<(u32, u32)> {
        if !(u.is_finite() && v.is_finite()) || u < -0.5 || v < -0.5 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        let c = (u.round().max(0.0) as u32).min(self.width - 1);
        let r = (v.round().max(0.0) as u32).min(self.height - 1);
        Some((c, r))
    }

    pub fn true_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn bounding_box(&self) -> PixelBox {
        let mut b = PixelBox {
            min_col: u32::MAX,
            min_row: u32::MAX,
            max_col: 0,
            max_row: 0,
        };
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(c, r) {
                    b.min_col = b.min_col.min(c);
                    b.max_col = b.max_col.max(c);
                    b.min_row = b.min_row.min(r);
                    b.max_row = b.max_row.max(r);
                }
            }
        }
        b
    }

    /// The true pixel whose center is closest to `(u, v)`; ties resolve to the
    /// smallest row-major index. Searches square rings outward from the
    /// clamped start pixel and stops once no closer ring can exist.
    pub fn nearest_true_pixel(&self, u: f64, v: f64) -> (u32, u32) {
        let w = self.width as i64;
        let h = self.height as i64;
        let uc = if u.is_finite() { u } else { 0.0 };
        let vc = if v.is_finite() { v } else { 0.0 };
        let c0 = (uc.round() as i64).clamp(0, w - 1);
        let r0 = (vc.round() as i64).clamp(0, h - 1);
        // distance from (u, v) to the start pixel center, bounds how far ring k can be
        let offset = ((uc - c0 as f64).powi(2) + (vc - r0 as f64).powi(2)).sqrt();
        let mut best: Option<(f64, i64, (u32, u32))> = None;
        let max_ring = w.max(h);
        for k in 0..=max_ring {
            if let Some((best_d2, _, _)) = best {
                // every pixel on ring k is at least k - offset away
                let lower = (k as f64 - offset).max(0.0);
                if lower * lower > best_d2 {
                    break;
                }
            }
            let mut visit = |c: i64, r: i64| {
                if c < 0 || r < 0 || c >= w || r >= h || !self.pixels[(r * w + c) as usize] {
                    return;
                }
                let d2 = (uc - c as f64).powi(2) + (vc - r as f64).powi(2);
                let idx = r * w + c;
                let better = match best {
                    None => true,
                    Some((bd, bi, _)) => d2 < bd || (d2 == bd && idx < bi),
                };
                if better {
                    best = Some((d2, idx, (c as u32, r as u32)));
                }
            };
            if k == 0 {
                visit(c0, r0);
                continue;
            }
            for c in (c0 - k)..=(c0 + k) {
                visit(c, r0 - k);
                visit(c, r0 + k);
            }
            for r in (r0 - k + 1)..=(r0 + k - 1) {
                visit(c0 - k, r);
                visit(c0 + k, r);
            }
        }
        best.expect("mask has at least one true pixel").2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_invariants() {
        assert!(matches!(
            Calibration::new(0, 10, Matrix3::identity(), Matrix4::identity()),
            Err(FrameError::EmptyImage { .. })
        ));
        assert!(matches!(
            Calibration::new(10, 10, Matrix3::zeros(), Matrix4::identity()),
            Err(FrameError::SingularIntrinsic { .. })
        ));
        let mut e = Matrix4::identity();
        e[(3, 0)] = 0.5;
        assert!(matches!(
            Calibration::new(10, 10, Matrix3::identity(), e),
            Err(FrameError::ExtrinsicBottomRow { .. })
        ));
        assert!(Calibration::identity(4, 3).is_ok());
    }

    #[test]
    fn frame_rejects_schema_mismatch_and_nan() {
        let calib = Calibration::identity(4, 4).unwrap();
        let schema = vec!["rcs".to_string()];
        let err = CalibratedFrame::new(calib.clone(), schema.clone(), vec![RadarPoint::new(0.0, 0.0, 1.0, vec![])]);
        assert!(matches!(err, Err(FrameError::SchemaMismatch { index: 0, .. })));
        let err = CalibratedFrame::new(calib.clone(), schema, vec![RadarPoint::new(f64::NAN, 0.0, 1.0, vec![1.0])]);
        assert!(matches!(err, Err(FrameError::NonFinitePoint { index: 0 })));
        let err = CalibratedFrame::new(calib, vec!["x".into()], vec![]);
        assert!(matches!(err, Err(FrameError::BadAttributeName(_))));
    }

    #[test]
    fn mask_requires_a_true_pixel() {
        assert!(matches!(
            InstanceMask::new(1, 2, 2, vec![false; 4]),
            Err(FrameError::EmptyMask { instance_id: 1 })
        ));
        assert!(matches!(InstanceMask::new(0, 2, 2, vec![true; 4]), Err(FrameError::ZeroInstanceId)));
        assert!(matches!(InstanceMask::new(1, 2, 2, vec![true; 3]), Err(FrameError::MaskSize { .. })));
    }

    #[test]
    fn mask_membership_rounds_to_nearest_pixel() {
        let m = InstanceMask::rectangle(1, 10, 10, (2, 2), (4, 4)).unwrap();
        assert!(m.contains(1.6, 2.4));
        assert!(!m.contains(1.4, 2.4));
        assert!(m.contains(4.49, 4.49));
        assert!(!m.contains(4.5, 4.0));
        assert!(!m.contains(-3.0, 3.0));
        let full = InstanceMask::new(2, 3, 3, vec![true; 9]).unwrap();
        assert!(full.contains(2.9, 2.9));
        assert!(!full.contains(3.0, 1.0));
    }

    #[test]
    fn bounding_box_and_nearest_pixel() {
        let m = InstanceMask::rectangle(1, 20, 10, (5, 2), (8, 6)).unwrap();
        assert_eq!(
            m.bounding_box(),
            PixelBox {
                min_col: 5,
                min_row: 2,
                max_col: 8,
                max_row: 6
            }
        );
        assert_eq!(m.nearest_true_pixel(0.0, 0.0), (5, 2));
        assert_eq!(m.nearest_true_pixel(19.0, 4.2), (8, 4));
        assert_eq!(m.nearest_true_pixel(6.2, 3.9), (6, 4));
        assert_eq!(m.nearest_true_pixel(-100.0, 100.0), (5, 6));
    }

    #[test]
    fn nearest_pixel_matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(5);
        let pixels: Vec<bool> = (0..30 * 20).map(|_| rng.random::<f64>() < 0.05).collect();
        let mask = InstanceMask::new(3, 30, 20, pixels).unwrap();
        for _ in 0..300 {
            let u = rng.random_range(-10.0..40.0);
            let v = rng.random_range(-10.0..30.0);
            let mut best = (f64::INFINITY, (0, 0));
            for r in 0..20u32 {
                for c in 0..30u32 {
                    if mask.get(c, r) {
                        let d2 = (u - c as f64).powi(2) + (v - r as f64).powi(2);
                        if d2 < best.0 {
                            best = (d2, (c, r));
                        }
                    }
                }
            }
            assert_eq!(mask.nearest_true_pixel(u, v), best.1, "at ({u}, {v})");
        }
    }
}
