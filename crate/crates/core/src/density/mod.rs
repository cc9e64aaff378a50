//! Kernel density estimation and the density diagnostics: KDE surfaces over a
//! BEV lattice, image-grid point counts, and BEV pillar statistics.
//!
//! The estimator is the sample-wise product-bandwidth KDE
//!
//! ```text
//! K(p) = 1 / (W * prod_j B_j) * sum_w k(r_w),   r_w = || (p - p_w) / B ||
//! ```
//!
//! where the Gauss kernel is `exp(-gamma * r^2 / 2)`. The prefactor omits the
//! Gaussian `(2 pi)^(J/2)` normalizer, which does not affect ranking;
//! [`gauss_normalizer`] supplies it when a proper density is needed.

mod grid;
mod pillar;

pub use grid::{grid_density_surface, kde_surface_3d, DensityGrid, GridCsvError, Lattice};
pub use pillar::{pillarize, pillarize_positions, PillarHistogram};

use crate::config::{BandwidthRule, DistanceForm, Kernel};
use crate::geometry::manhattan_matrix;

/// Per-dimension KDE bandwidths, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector(Vec<f64>);

impl BandwidthVector {
    /// # Panics
    /// If `components` is empty or holds a non-positive or non-finite value.
    pub fn new(components: Vec<f64>) -> Self {
        assert!(!components.is_empty(), "bandwidth vector must be nonempty");
        assert!(
            components.iter().all(|b| *b > 0.0 && b.is_finite()),
            "bandwidths must be finite and > 0: {components:?}"
        );
        Self(components)
    }

    pub fn uniform(value: f64, dims: usize) -> Self {
        Self::new(vec![value; dims])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn product(&self) -> f64 {
        self.0.iter().product()
    }
}

/// Bandwidth for `samples` points in `dims` dimensions.
///
/// Scott: `W^(-1/(J+4))`. Silverman: `(W (J+2) / 2)^(-1/(J+4))`.
/// User-defined: the given constant. All dimensions share one value.
///
/// # Panics
/// If `samples` or `dims` is zero.
pub fn bandwidth(rule: BandwidthRule, samples: usize, dims: usize) -> BandwidthVector {
    assert!(samples >= 1 && dims >= 1, "bandwidth needs W >= 1 and J >= 1");
    let w = samples as f64;
    let j = dims as f64;
    let exponent = -1.0 / (j + 4.0);
    let value = match rule {
        BandwidthRule::Scott => w.powf(exponent),
        BandwidthRule::Silverman => (w * (j + 2.0) / 2.0).powf(exponent),
        BandwidthRule::UserDefined(b) => b,
    };
    BandwidthVector::uniform(value, dims)
}

/// Kernel profile at scaled distance `r >= 0`. `gamma` only affects Gauss.
pub fn kernel_value(kernel: Kernel, r: f64, gamma: f64) -> f64 {
    debug_assert!(r >= 0.0);
    match kernel {
        Kernel::Gauss => (-gamma * r * r / 2.0).exp(),
        Kernel::Epanechnikov => 0.75 * (1.0 - r * r).max(0.0),
        Kernel::Uniform => {
            if r <= 1.0 {
                0.5
            } else {
                0.0
            }
        }
        Kernel::Triangle => (1.0 - r).max(0.0),
        Kernel::Cosine => {
            if r <= 1.0 {
                std::f64::consts::FRAC_PI_4 * (std::f64::consts::FRAC_PI_2 * r).cos()
            } else {
                0.0
            }
        }
    }
}

/// Factor turning the Gauss-kernel KDE into a density integrating to one:
/// `(gamma / (2 pi))^(J/2)`.
pub fn gauss_normalizer(dims: usize, gamma: f64) -> f64 {
    (gamma / std::f64::consts::TAU).powf(dims as f64 / 2.0)
}

fn scaled_distance(query: &[f64], sample: &[f64], bw: &[f64], form: DistanceForm) -> f64 {
    let scaled = query.iter().zip(sample).zip(bw).map(|((q, s), b)| (q - s) / b);
    match form {
        DistanceForm::PerDimension => scaled.map(|d| d * d).sum::<f64>().sqrt(),
        DistanceForm::Manhattan => scaled.map(f64::abs).sum(),
    }
}

/// KDE value at `query` with the per-dimension (Euclidean) distance form.
pub fn kde_density<P: AsRef<[f64]>>(query: &[f64], samples: &[P], bw: &BandwidthVector, kernel: Kernel, gamma: f64) -> f64 {
    kde_density_with(query, samples, bw, kernel, gamma, DistanceForm::PerDimension)
}

/// KDE value at `query` with an explicit distance form.
///
/// # Panics
/// If dimensions of query, samples and bandwidth disagree, or `samples` is empty.
pub fn kde_density_with<P: AsRef<[f64]>>(
    query: &[f64],
    samples: &[P],
    bw: &BandwidthVector,
    kernel: Kernel,
    gamma: f64,
    form: DistanceForm,
) -> f64 {
    assert!(!samples.is_empty(), "kde_density needs at least one sample");
    assert_eq!(query.len(), bw.dims(), "query and bandwidth dimensions differ");
    let b = bw.components();
    let sum: f64 = samples
        .iter()
        .map(|s| {
            let s = s.as_ref();
            assert_eq!(s.len(), b.len(), "sample and bandwidth dimensions differ");
            kernel_value(kernel, scaled_distance(query, s, b, form), gamma)
        })
        .sum();
    sum / (samples.len() as f64 * bw.product())
}

/// KDE value of every sample against the whole set.
///
/// The Manhattan form goes through the Manhattan distance matrix of the
/// bandwidth-scaled points; the per-dimension form evaluates offsets directly.
pub fn sample_densities<P: AsRef<[f64]>>(
    points: &[P],
    bw: &BandwidthVector,
    kernel: Kernel,
    gamma: f64,
    form: DistanceForm,
) -> Vec<f64> {
    match form {
        DistanceForm::PerDimension => points
            .iter()
            .map(|p| kde_density_with(p.as_ref(), points, bw, kernel, gamma, form))
            .collect(),
        DistanceForm::Manhattan => {
            let b = bw.components();
            let scaled: Vec<Vec<f64>> = points
                .iter()
                .map(|p| p.as_ref().iter().zip(b).map(|(x, bj)| x / bj).collect())
                .collect();
            let h = manhattan_matrix(&scaled);
            let norm = points.len() as f64 * bw.product();
            (0..points.len())
                .map(|i| h.row(i).iter().map(|&r| kernel_value(kernel, r, gamma)).sum::<f64>() / norm)
                .collect()
        }
    }
}

/// Sample indices ordered by descending KDE value; ties keep ascending index.
pub fn density_rank<P: AsRef<[f64]>>(
    points: &[P],
    bw: &BandwidthVector,
    kernel: Kernel,
    gamma: f64,
    form: DistanceForm,
) -> Vec<usize> {
    let values = sample_densities(points, bw, kernel, gamma, form);
    rank_descending(&values)
}

pub(crate) fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}
