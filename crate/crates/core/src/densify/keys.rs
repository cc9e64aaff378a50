use nalgebra::Matrix2;
use serde::Serialize;

use super::{DensifyError, InstancePointSet};
use crate::config::SimDenConfig;
use crate::density::{bandwidth, density_rank};
use crate::geometry::Projector;
use crate::types::{CalibratedFrame, InstanceMask};

/// Diagonal added to every covariance so sampling never sees a singular matrix.
pub const COVARIANCE_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Sample covariance of the instance's image-plane points.
    Priors,
    /// Too few points; a sixth of the mask box extent per axis.
    MaskBox,
}

/// The densest points of an instance and the Gaussian they define.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyPointSet {
    /// Indices into the instance point set, densest first.
    pub indices: Vec<usize>,
    pub points3d: Vec<[f64; 3]>,
    pub center3d: [f64; 3],
    pub center2d: [f64; 2],
    pub covariance2d: Matrix2<f64>,
    pub covariance_source: CovarianceSource,
}

impl KeyPointSet {
    /// Eigenvalues of the image-plane covariance, ascending.
    pub fn covariance_eigenvalues(&self) -> [f64; 2] {
        let s = &self.covariance2d;
        let half_trace = 0.5 * (s[(0, 0)] + s[(1, 1)]);
        let half_gap = (0.5 * (s[(0, 0)] - s[(1, 1)])).hypot(s[(0, 1)]);
        [half_trace - half_gap, half_trace + half_gap]
    }
}

/// Ranks the instance's back-projected points by 3-D kernel density and keeps
/// the `max_key_points` densest. Their mean, projected into the image, is the
/// simulation center.
pub fn select_key_points(
    inst: &InstancePointSet,
    mask: &InstanceMask,
    frame: &CalibratedFrame,
    cfg: &SimDenConfig,
) -> Result<KeyPointSet, DensifyError> {
    if inst.points.is_empty() {
        return Err(DensifyError::EmptyInstance {
            instance_id: inst.instance_id,
        });
    }
    let proj = Projector::new(frame.calibration())?;
    let all3d: Vec<[f64; 3]> = inst.points.iter().map(|p| proj.to_radar([p.u, p.v, p.d])).collect();
    let bw = bandwidth(cfg.bandwidth_rule, all3d.len(), 3);
    let order = density_rank(&all3d, &bw, cfg.kernel, cfg.gamma, cfg.distance);
    let keep = cfg.max_key_points.min(all3d.len());
    let indices: Vec<usize> = order[..keep].to_vec();
    let points3d: Vec<[f64; 3]> = indices.iter().map(|&i| all3d[i]).collect();

    let mut center3d = [0.0; 3];
    for p in &points3d {
        for k in 0..3 {
            center3d[k] += p[k] / keep as f64;
        }
    }
    let [u, v, _] = proj.to_image(center3d);

    let (mut covariance2d, covariance_source) = if inst.points.len() >= 3 {
        (pixel_covariance(&inst.pixels()), CovarianceSource::Priors)
    } else {
        let b = mask.bounding_box();
        let sx = b.width() as f64 / 6.0;
        let sy = b.height() as f64 / 6.0;
        (Matrix2::new(sx * sx, 0.0, 0.0, sy * sy), CovarianceSource::MaskBox)
    };
    covariance2d += Matrix2::identity() * COVARIANCE_JITTER;

    Ok(KeyPointSet {
        indices,
        points3d,
        center3d,
        center2d: [u, v],
        covariance2d,
        covariance_source,
    })
}

/// Unbiased sample covariance. Needs at least two points.
fn pixel_covariance(pts: &[[f64; 2]]) -> Matrix2<f64> {
    let n = pts.len() as f64;
    let mu = pts.iter().fold([0.0; 2], |acc, p| [acc[0] + p[0] / n, acc[1] + p[1] / n]);
    let mut s = Matrix2::zeros();
    for p in pts {
        let (dx, dy) = (p[0] - mu[0], p[1] - mu[1]);
        s[(0, 0)] += dx * dx;
        s[(0, 1)] += dx * dy;
        s[(1, 1)] += dy * dy;
    }
    s[(1, 0)] = s[(0, 1)];
    s / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densify::depth_mode_filter;
    use crate::types::{Calibration, ProjectedPoint};

    fn frame() -> CalibratedFrame {
        CalibratedFrame::new(Calibration::identity(100, 100).unwrap(), vec![], vec![]).unwrap()
    }

    fn inst(pix: &[[f64; 2]], d: f64) -> InstancePointSet {
        let pts: Vec<ProjectedPoint> = pix
            .iter()
            .enumerate()
            .map(|(i, p)| ProjectedPoint {
                u: p[0],
                v: p[1],
                d,
                source_index: i,
            })
            .collect();
        depth_mode_filter(1, &pts).unwrap()
    }

    #[test]
    fn cluster_beats_outlier() {
        let mask = InstanceMask::rectangle(1, 100, 100, (0, 0), (99, 99)).unwrap();
        let s = inst(&[[10.0, 10.0], [11.0, 10.0], [10.0, 11.0], [11.0, 11.0], [60.0, 60.0]], 5.0);
        let cfg = SimDenConfig::default();
        let k = select_key_points(&s, &mask, &frame(), &cfg).unwrap();
        assert_eq!(k.indices.len(), 4);
        assert!(!k.indices.contains(&4));
        assert!((k.center2d[0] - 10.5).abs() < 1e-9 && (k.center2d[1] - 10.5).abs() < 1e-9);
        assert_eq!(k.covariance_source, CovarianceSource::Priors);
    }

    #[test]
    fn few_points_fall_back_to_mask_box() {
        let mask = InstanceMask::rectangle(1, 100, 100, (20, 40), (79, 51)).unwrap();
        let s = inst(&[[30.0, 45.0], [31.0, 45.0]], 8.0);
        let k = select_key_points(&s, &mask, &frame(), &SimDenConfig::default()).unwrap();
        assert_eq!(k.covariance_source, CovarianceSource::MaskBox);
        assert!((k.covariance2d[(0, 0)] - (100.0 + 1e-6)).abs() < 1e-12);
        assert!((k.covariance2d[(1, 1)] - (4.0 + 1e-6)).abs() < 1e-12);
        assert_eq!(k.covariance2d[(0, 1)], 0.0);
    }

    #[test]
    fn key_count_is_bounded_by_cluster_size() {
        let mask = InstanceMask::rectangle(1, 100, 100, (0, 0), (99, 99)).unwrap();
        let s = inst(&[[50.0, 50.0], [52.0, 50.0], [51.0, 53.0]], 3.0);
        let cfg = SimDenConfig {
            max_key_points: 10,
            ..SimDenConfig::default()
        };
        let k = select_key_points(&s, &mask, &frame(), &cfg).unwrap();
        assert_eq!(k.points3d.len(), 3);
        let ev = k.covariance_eigenvalues();
        assert!(ev[0] > 0.0 && ev[0] <= ev[1]);
    }
}
