use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::config::LossConfig;

/// Tolerance on the total mass of a direction distribution.
const MASS_TOLERANCE: f64 = 1e-9;

/// `-alpha (1 - p)^sigma log2(p)` for the probability of the true class.
pub fn focal_loss(p_t: f64, alpha: f64, sigma: f64) -> Result<f64, FusionError> {
    check_probability(p_t)?;
    Ok(-alpha * (1.0 - p_t).powf(sigma) * p_t.log2())
}

/// Derivative of [`focal_loss`] with respect to `p_t`.
pub fn focal_loss_grad(p_t: f64, alpha: f64, sigma: f64) -> Result<f64, FusionError> {
    check_probability(p_t)?;
    let q = 1.0 - p_t;
    let decay = if sigma == 0.0 { 0.0 } else { alpha * sigma * q.powf(sigma - 1.0) * p_t.log2() };
    Ok(decay - alpha * q.powf(sigma) / (p_t * LN_2))
}

fn check_probability(p: f64) -> Result<(), FusionError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(FusionError::Domain(format!("probability {p} outside (0, 1]")));
    }
    Ok(())
}

/// Quadratic inside `|y - tau| < beta`, linear outside, matched in value and
/// slope at the boundary.
pub fn smooth_l1(y: f64, tau: f64, beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    let r = (y - tau).abs();
    if r < beta {
        0.5 * r * r / beta
    } else {
        r - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1`] with respect to `y`.
pub fn smooth_l1_grad(y: f64, tau: f64, beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    let r = y - tau;
    if r.abs() < beta {
        r / beta
    } else {
        r.signum()
    }
}

/// `-sum P_true log2 P_pred`; terms with zero true mass contribute nothing.
pub fn cross_entropy_dir(p_true: &[f64], p_pred: &[f64]) -> Result<f64, FusionError> {
    check_distributions(p_true, p_pred)?;
    Ok(-p_true
        .iter()
        .zip(p_pred)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| t * p.log2())
        .sum::<f64>())
}

/// Gradient of [`cross_entropy_dir`] with respect to `p_pred`.
pub fn cross_entropy_dir_grad(p_true: &[f64], p_pred: &[f64]) -> Result<Vec<f64>, FusionError> {
    check_distributions(p_true, p_pred)?;
    Ok(p_true
        .iter()
        .zip(p_pred)
        .map(|(&t, &p)| if t > 0.0 { -t / (p * LN_2) } else { 0.0 })
        .collect())
}

fn check_distributions(p_true: &[f64], p_pred: &[f64]) -> Result<(), FusionError> {
    if p_true.len() != p_pred.len() || p_true.is_empty() {
        return Err(FusionError::ShapeMismatch(format!("{} vs {} bins", p_true.len(), p_pred.len())));
    }
    for (name, dist) in [("true", p_true), ("predicted", p_pred)] {
        if dist.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(FusionError::Domain(format!("{name} distribution has a negative or non-finite entry")));
        }
        let mass: f64 = dist.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(FusionError::Domain(format!("{name} distribution sums to {mass}")));
        }
    }
    if let Some(i) = (0..p_true.len()).find(|&i| p_true[i] > 0.0 && p_pred[i] == 0.0) {
        return Err(FusionError::Domain(format!("bin {i} has true mass but zero predicted mass")));
    }
    Ok(())
}

/// The four detection loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub cls: f64,
    pub occ: f64,
    pub loc: f64,
    pub dir: f64,
}

/// `lambda . (cls, occ, loc, dir)`.
pub fn total_loss(parts: &LossComponents, cfg: &LossConfig) -> f64 {
    let [l1, l2, l3, l4] = cfg.lambdas;
    l1 * parts.cls + l2 * parts.occ + l3 * parts.loc + l4 * parts.dir
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-12)
    }

    #[test]
    fn focal_examples() {
        assert_eq!(focal_loss(1.0, 0.25, 2.0).unwrap(), 0.0);
        assert!((focal_loss(0.5, 0.25, 2.0).unwrap() - 0.0625).abs() < 1e-16);
        assert!((focal_loss(0.5, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-16);
        assert!(focal_loss(0.0, 0.25, 2.0).is_err());
        assert!(focal_loss(1.5, 0.25, 2.0).is_err());
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(3.0, 3.0, 0.1), 0.0);
        assert!((smooth_l1(1.05, 1.0, 0.1) - 0.0125).abs() < 1e-15);
        assert!((smooth_l1(0.8, 1.0, 0.1) - 0.15).abs() < 1e-15);
        let (lo, hi) = (smooth_l1(0.1 - 1e-9, 0.0, 0.1), smooth_l1(0.1 + 1e-9, 0.0, 0.1));
        assert!((lo - hi).abs() <= 1e-8);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy_dir(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cross_entropy_dir(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-16);
        assert!((cross_entropy_dir(&[0.25; 4], &[0.25; 4]).unwrap() - 2.0).abs() < 1e-15);
        assert!(cross_entropy_dir(&[1.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(cross_entropy_dir(&[0.5, 0.4], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn weighted_total() {
        let cfg = LossConfig::default();
        let ones = LossComponents {
            cls: 1.0,
            occ: 1.0,
            loc: 1.0,
            dir: 1.0,
        };
        assert!((total_loss(&ones, &cfg) - 4.2).abs() < 1e-15);
        let zero = LossComponents {
            cls: 0.0,
            occ: 0.0,
            loc: 0.0,
            dir: 0.0,
        };
        assert_eq!(total_loss(&zero, &cfg), 0.0);
    }

    proptest! {
        #[test]
        fn focal_gradient_matches_differences(p in 0.01f64..0.99, alpha in 0.05f64..1.0, sigma in 0.0f64..4.0) {
            let fd = central(|x| focal_loss(x, alpha, sigma).unwrap(), p);
            prop_assert!(rel(focal_loss_grad(p, alpha, sigma).unwrap(), fd) <= 1e-4);
        }

        #[test]
        fn smooth_l1_gradient_matches_differences(y in -2.0f64..2.0, tau in -2.0f64..2.0) {
            let beta = 0.1;
            prop_assume!(((y - tau).abs() - beta).abs() > 1e-3);
            let fd = central(|x| smooth_l1(x, tau, beta), y);
            let g = smooth_l1_grad(y, tau, beta);
            prop_assert!((g - fd).abs() <= 1e-4 * g.abs().max(1e-3));
        }

        #[test]
        fn cross_entropy_gradient_matches_differences(raw in proptest::collection::vec(0.05f64..1.0, 2..6), k in 0usize..6) {
            let total: f64 = raw.iter().sum();
            let pred: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let mut truth = vec![0.0; pred.len()];
            truth[k % pred.len()] = 0.7;
            truth[(k + 1) % pred.len()] += 0.3;
            let g = cross_entropy_dir_grad(&truth, &pred).unwrap();
            for i in 0..pred.len() {
                // unnormalized perturbation of one bin; the formula itself does not renormalize
                let f = |x: f64| {
                    -truth.iter().enumerate().filter(|(_, &t)| t > 0.0)
                        .map(|(j, &t)| t * if j == i { x } else { pred[j] }.log2()).sum::<f64>()
                };
                let fd = central(f, pred[i]);
                prop_assert!((g[i] - fd).abs() <= 1e-4 * g[i].abs().max(1e-6));
            }
        }

        #[test]
        fn total_is_linear(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0, d in 0.0f64..10.0) {
            let cfg = LossConfig::default();
            let p = LossComponents { cls: a, occ: b, loc: c, dir: d };
            let q = LossComponents { cls: 2.0 * a, occ: 2.0 * b, loc: 2.0 * c, dir: 2.0 * d };
            prop_assert!((total_loss(&q, &cfg) - 2.0 * total_loss(&p, &cfg)).abs() <= 1e-12 * (1.0 + total_loss(&p, &cfg)));
        }
    }
}
