//! Projection between the radar frame and the image, mask association,
//! distance matrices, and instance boundary extraction.
//!
//! Homogeneous convention: a radar point `P` is lifted to `[x, y, z, 1]`,
//! mapped by the extrinsic to camera coordinates, truncated to its first
//! three rows, and then mapped by the intrinsic. The third component of the
//! result is the depth `d`; pixel coordinates are the first two components
//! divided by `d`. For pinhole intrinsics with bottom row `(0, 0, 1)`, `d` is
//! the camera-axis coordinate.

mod edge;

pub use edge::{
    boundary_path, convex_hull, extract_edge_points, insert_referring_points, Polyline2D,
};

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::types::{CalibratedFrame, Calibration, InstanceMask, ProjectedPoint, SINGULAR_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("intrinsic matrix is not invertible")]
    SingularIntrinsic,
    #[error("extrinsic matrix is not invertible")]
    SingularExtrinsic,
    #[error("point {index} has non-positive depth {depth}")]
    NonPositiveDepth { index: usize, depth: f64 },
    #[error("mask {instance_id} is {got:?}, frame is {expected:?}")]
    DimensionMismatch {
        instance_id: u32,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),
}

/// Precomputed forward and inverse camera maps for one calibration.
#[derive(Debug, Clone)]
pub struct Projector {
    forward: Matrix3x4<f64>,
    intrinsic_inv: Matrix3<f64>,
    extrinsic_inv: Matrix4<f64>,
    dims: (u32, u32),
}

impl Projector {
    pub fn new(calib: &Calibration) -> Result<Self, GeometryError> {
        let k = calib.intrinsic();
        if k.determinant().abs() <= SINGULAR_EPS {
            return Err(GeometryError::SingularIntrinsic);
        }
        let intrinsic_inv = k.try_inverse().ok_or(GeometryError::SingularIntrinsic)?;
        let extrinsic_inv = calib
            .extrinsic()
            .try_inverse()
            .ok_or(GeometryError::SingularExtrinsic)?;
        let truncated: Matrix3x4<f64> = calib.extrinsic().fixed_rows::<3>(0).into_owned();
        Ok(Self {
            forward: k * truncated,
            intrinsic_inv,
            extrinsic_inv,
            dims: calib.dims(),
        })
    }

    /// Maps a radar-frame point to `(u, v, d)` without any visibility test.
    pub fn to_image(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.forward * Vector4::new(p[0], p[1], p[2], 1.0);
        [q.x / q.z, q.y / q.z, q.z]
    }

    /// Whether `(u, v, d)` is in front of the camera and inside the raster.
    pub fn is_visible(&self, [u, v, d]: [f64; 3]) -> bool {
        d > 0.0 && u >= 0.0 && v >= 0.0 && u < self.dims.0 as f64 && v < self.dims.1 as f64
    }

    /// Inverse of [`Projector::to_image`] for `d > 0`.
    pub fn to_radar(&self, [u, v, d]: [f64; 3]) -> [f64; 3] {
        let cam = self.intrinsic_inv * Vector3::new(u * d, v * d, d);
        let r = self.extrinsic_inv * Vector4::new(cam.x, cam.y, cam.z, 1.0);
        [r.x, r.y, r.z]
    }
}

/// Projects every frame point into the image, keeping points with positive
/// depth that land inside the raster.
pub fn project_points(frame: &CalibratedFrame) -> Result<Vec<ProjectedPoint>, GeometryError> {
    let proj = Projector::new(frame.calibration())?;
    Ok(frame
        .points()
        .iter()
        .enumerate()
        .filter_map(|(source_index, p)| {
            let uvd = proj.to_image(p.position());
            proj.is_visible(uvd).then_some(ProjectedPoint {
                u: uvd[0],
                v: uvd[1],
                d: uvd[2],
                source_index,
            })
        })
        .collect())
}

/// Maps `(u, v, d)` image points back to radar coordinates.
pub fn back_project(points: &[[f64; 3]], frame: &CalibratedFrame) -> Result<Vec<[f64; 3]>, GeometryError> {
    let proj = Projector::new(frame.calibration())?;
    points
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            if !(p[2] > 0.0) {
                return Err(GeometryError::NonPositiveDepth { index, depth: p[2] });
            }
            Ok(proj.to_radar(p))
        })
        .collect()
}

/// Projected points falling on one instance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePoints {
    pub instance_id: u32,
    pub points: Vec<ProjectedPoint>,
}

/// Assigns projected points to every mask whose nearest pixel is set.
///
/// A point inside several masks belongs to each of them. Output follows the
/// order of `masks`; masks without points yield empty sets.
pub fn associate_masks(
    projected: &[ProjectedPoint],
    masks: &[InstanceMask],
    frame_dims: (u32, u32),
) -> Result<Vec<InstancePoints>, GeometryError> {
    masks
        .iter()
        .map(|mask| {
            if mask.dims() != frame_dims {
                return Err(GeometryError::DimensionMismatch {
                    instance_id: mask.instance_id(),
                    expected: frame_dims,
                    got: mask.dims(),
                });
            }
            Ok(InstancePoints {
                instance_id: mask.instance_id(),
                points: projected.iter().copied().filter(|p| mask.contains(p.u, p.v)).collect(),
            })
        })
        .collect()
}

/// Pairwise L1 distances. The result is symmetric with an exactly zero
/// diagonal.
///
/// # Panics
/// If the points do not share one dimension.
pub fn manhattan_matrix<P: AsRef<[f64]>>(points: &[P]) -> DMatrix<f64> {
    let n = points.len();
    let dim = points.first().map_or(0, |p| p.as_ref().len());
    assert!(
        points.iter().all(|p| p.as_ref().len() == dim),
        "manhattan_matrix: points must share one dimension"
    );
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points[i]
                .as_ref()
                .iter()
                .zip(points[j].as_ref())
                .map(|(a, b)| (a - b).abs())
                .sum();
            h[(i, j)] = d;
            h[(j, i)] = d;
        }
    }
    h
}
