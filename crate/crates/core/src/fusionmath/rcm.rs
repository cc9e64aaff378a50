use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{conv2d, seeded_matrix, silu, softmax_rows, Conv2dWeights, FeatureMap, FusionError};

/// Cascaded convolutions over a group of receptive fields with a residual:
/// `F_z = Conv(F_{z-1}, ker_z)` from `F_0 = F_m`, and the output is
/// `(1/Z) * SiLU(sum_z F_z) + F_m`.
///
/// Every bank maps the channel count onto itself and must have an odd size.
pub fn multi_receptive_enhance(f_m: &FeatureMap, banks: &[Conv2dWeights]) -> Result<FeatureMap, FusionError> {
    if banks.is_empty() {
        return Err(FusionError::ShapeMismatch("at least one receptive field is required".into()));
    }
    let c = f_m.channels();
    let mut stage = f_m.clone();
    let mut sum = FeatureMap::zeros(c, f_m.height(), f_m.width());
    for bank in banks {
        if bank.out_channels != c {
            return Err(FusionError::ShapeMismatch(format!(
                "bank maps to {} channels, expected {c}",
                bank.out_channels
            )));
        }
        stage = conv2d(&stage, bank)?;
        sum = sum.zip_with(&stage, |a, b| a + b)?;
    }
    let z = banks.len() as f64;
    sum.zip_with(f_m, |s, f| silu(s) / z + f)
}

/// 1x1 projections of the pooled channel vectors.
///
/// `wq` and `wk` map the `C` pooled values to `C * d_k`, read as a `C x d_k`
/// matrix with one row per channel; `wv` maps them to `C` values.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub d_k: usize,
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
}

impl AttentionWeights {
    pub fn seeded<R: Rng + ?Sized>(channels: usize, d_k: usize, rng: &mut R) -> Self {
        Self {
            d_k,
            wq: seeded_matrix(channels * d_k, channels, channels, rng),
            wk: seeded_matrix(channels * d_k, channels, channels, rng),
            wv: seeded_matrix(channels, channels, channels, rng),
        }
    }

    fn check(&self, channels: usize) -> Result<(), FusionError> {
        let qk = (channels * self.d_k, channels);
        if self.d_k == 0
            || self.wq.shape() != qk
            || self.wk.shape() != qk
            || self.wv.shape() != (channels, channels)
        {
            return Err(FusionError::ShapeMismatch(format!(
                "attention weights do not fit {channels} channels with d_k = {}",
                self.d_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: FeatureMap,
    /// Row-stochastic `C x C` attention matrix.
    pub attention: DMatrix<f64>,
    /// The attended value vector broadcast over the image grid.
    pub channel_vector: DVector<f64>,
}

/// `SoftMax(Q K^T / sqrt(d_k)) V` for row-per-token `Q`, `K` and a value
/// column. Returns the product and the attention matrix.
pub fn attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), FusionError> {
    if q.ncols() != k.ncols() || k.nrows() != v.len() || k.ncols() == 0 {
        return Err(FusionError::ShapeMismatch(format!(
            "Q {:?}, K {:?}, V {}",
            q.shape(),
            k.shape(),
            v.len()
        )));
    }
    let logits = q * k.transpose() / (k.ncols() as f64).sqrt();
    let a = softmax_rows(&logits);
    Ok((&a * v, a))
}

fn reshape_rows(flat: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, flat.as_slice())
}

/// Queries the pooled image channels with the pooled radar channels and
/// scales every image channel by the attended value.
pub fn compensatory_attention(
    f_bar_radar: &FeatureMap,
    f_bar_img: &FeatureMap,
    f_img: &FeatureMap,
    w: &AttentionWeights,
) -> Result<AttentionOutput, FusionError> {
    f_bar_radar.expect_shape(f_bar_img)?;
    f_bar_img.expect_shape(f_img)?;
    let c = f_img.channels();
    w.check(c)?;
    let pooled_radar = DVector::from_vec(f_bar_radar.channel_means());
    let pooled_img = DVector::from_vec(f_bar_img.channel_means());
    let q = reshape_rows(&(&w.wq * &pooled_radar), c, w.d_k);
    let k = reshape_rows(&(&w.wk * &pooled_img), c, w.d_k);
    let v = &w.wv * &pooled_img;
    let (channel_vector, attention) = attention(&q, &k, &v)?;
    let (_, h, wd) = f_img.shape();
    let mut output = f_img.clone();
    for ch in 0..c {
        for i in 0..h {
            for j in 0..wd {
                output.set(ch, i, j, f_img.get(ch, i, j) * channel_vector[ch]);
            }
        }
    }
    Ok(AttentionOutput {
        output,
        attention,
        channel_vector,
    })
}
