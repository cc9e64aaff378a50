use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::KeyPointSet;
use crate::types::InstanceMask;

/// Redraws allowed for a sample that lands outside the mask before it is
/// snapped to the nearest mask pixel.
pub const MAX_REDRAWS: usize = 10;

/// Lower-triangular factor of a symmetric 2x2 matrix. A non-positive pivot is
/// treated as zero variance along that direction.
fn cholesky2(s: &Matrix2<f64>) -> [[f64; 2]; 2] {
    let l11 = s[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { s[(1, 0)] / l11 } else { 0.0 };
    let l22 = (s[(1, 1)] - l21 * l21).max(0.0).sqrt();
    [[l11, 0.0], [l21, l22]]
}

/// Draws `n` image-plane points from `N(center2d, covariance2d)`.
///
/// With a mask, a draw outside it is redrawn up to [`MAX_REDRAWS`] times and
/// the last attempt is then moved to the nearest mask pixel, so every output
/// lies in the mask.
pub fn gaussian_simulate<R: Rng + ?Sized>(
    keys: &KeyPointSet,
    n: usize,
    mask: Option<&InstanceMask>,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    let l = cholesky2(&keys.covariance2d);
    let mu = keys.center2d;
    let draw = |rng: &mut R| {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        [mu[0] + l[0][0] * z0, mu[1] + l[1][0] * z0 + l[1][1] * z1]
    };
    (0..n)
        .map(|_| {
            let mut p = draw(rng);
            if let Some(m) = mask {
                let mut redraws = 0;
                while !m.contains(p[0], p[1]) && redraws < MAX_REDRAWS {
                    p = draw(rng);
                    redraws += 1;
                }
                if !m.contains(p[0], p[1]) {
                    let (c, r) = m.nearest_true_pixel(p[0], p[1]);
                    p = [c as f64, r as f64];
                }
            }
            p
        })
        .collect()
}
