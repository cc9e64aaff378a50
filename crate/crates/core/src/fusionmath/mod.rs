//! Forward-only reference arithmetic for the camera/radar fusion blocks:
//! multi-receptive enhancement and compensatory attention, the mean-Mamba
//! interactive fusion path, the linear state-space scan, and the detection
//! losses.
//!
//! Everything works on small dense arrays in `f64` and is meant to be checked
//! against straight-line oracles, not to be fast.

mod conv;
mod loss;
mod mmif;
mod rcm;
mod ssm;

pub use conv::{conv2d, depthwise_conv2d, Conv2dWeights, DepthwiseWeights};
pub use loss::{
    cross_entropy_dir, cross_entropy_dir_grad, focal_loss, focal_loss_grad, smooth_l1, smooth_l1_grad, total_loss,
    LossComponents,
};
pub use mmif::{
    apply_gate, channel_transform, compute_gate, feature_difference_stack, interactive_fuse, inverse_channel_transform,
    layer_norm_tokens, mean_mamba_block, mean_map, morton_order, z_order_deserialize, z_order_serialize,
    DifferenceStack, FusedFeatures, MambaWeights, MeanMambaOutput, TokenSequence, LN_EPS,
};
pub use rcm::{attention, compensatory_attention, multi_receptive_enhance, AttentionOutput, AttentionWeights};
pub use ssm::{causal_conv, mamba_kernel, ssm_scan, zoh_discretize, Discretized, SsmParams};

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{height}x{width} is not divisible by factor {factor}")]
    IndivisibleShape { height: usize, width: usize, factor: usize },
    #[error("state component {index} has a = {value}; must be negative")]
    UnstableParameter { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Dense `C x H x W` array in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(FusionError::ShapeMismatch(format!(
                "dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(FusionError::ShapeMismatch(format!(
                "{channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::Domain("feature map entries must be finite".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "feature map dimensions must be positive");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Entries drawn uniformly from `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(channels, height, width);
        for v in &mut f.data {
            *v = rng.random_range(-1.0..1.0);
        }
        f
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(c, i, j)]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, value: f64) {
        let k = self.index(c, i, j);
        self.data[k] = value;
    }

    fn index(&self, c: usize, i: usize, j: usize) -> usize {
        assert!(c < self.channels && i < self.height && j < self.width, "index out of bounds");
        (c * self.height + i) * self.width + j
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Entrywise combination of two maps of equal shape.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, FusionError> {
        self.expect_shape(other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        })
    }

    pub fn expect_shape(&self, other: &Self) -> Result<(), FusionError> {
        if self.shape() != other.shape() {
            return Err(FusionError::ShapeMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    /// Channels as rows, pixels (row-major) as columns.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.channels, self.height * self.width, &self.data)
    }

    pub fn from_matrix(m: &DMatrix<f64>, height: usize, width: usize) -> Result<Self, FusionError> {
        if m.ncols() != height * width {
            return Err(FusionError::ShapeMismatch(format!(
                "matrix has {} columns, expected {height}x{width}",
                m.ncols()
            )));
        }
        let data: Vec<f64> = (0..m.nrows()).flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>()).collect();
        Self::new(m.nrows(), height, width, data)
    }

    /// Spatial mean of every channel.
    pub fn channel_means(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        self.data.chunks(self.height * self.width).map(|c| c.iter().sum::<f64>() / n).collect()
    }

    /// Stacks `other` after the channels of `self`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self, FusionError> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(FusionError::ShapeMismatch(format!(
                "spatial {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            channels: self.channels + other.channels,
            data,
            ..self.clone()
        })
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// `n x m` matrix with entries uniform in `+-1/sqrt(fan_in)`.
pub fn seeded_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> DMatrix<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}
