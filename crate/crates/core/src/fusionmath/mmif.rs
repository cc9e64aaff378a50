use nalgebra::DMatrix;
use rand::Rng;

use super::{
    causal_conv, depthwise_conv2d, mamba_kernel, seeded_matrix, silu, softmax_rows, DepthwiseWeights, FeatureMap,
    FusionError, SsmParams,
};

/// Variance floor inside the token normalization.
pub const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceStack {
    pub delta: FeatureMap,
    pub enhanced_radar: FeatureMap,
    pub enhanced_img: FeatureMap,
}

/// `delta = F_radar - F_Mimg`, plus each input passed through its own stack
/// of depthwise-conv/SiLU layers. An empty stack leaves the input unchanged.
pub fn feature_difference_stack(
    f_radar: &FeatureMap,
    f_mimg: &FeatureMap,
    radar_layers: &[DepthwiseWeights],
    img_layers: &[DepthwiseWeights],
) -> Result<DifferenceStack, FusionError> {
    if radar_layers.len() != img_layers.len() {
        return Err(FusionError::ShapeMismatch(format!(
            "{} radar layers vs {} image layers",
            radar_layers.len(),
            img_layers.len()
        )));
    }
    let delta = f_radar.zip_with(f_mimg, |a, b| a - b)?;
    let enhance = |f: &FeatureMap, layers: &[DepthwiseWeights]| {
        layers
            .iter()
            .try_fold(f.clone(), |acc, w| Ok::<_, FusionError>(depthwise_conv2d(&acc, w)?.map(silu)))
    };
    Ok(DifferenceStack {
        delta,
        enhanced_radar: enhance(f_radar, radar_layers)?,
        enhanced_img: enhance(f_mimg, img_layers)?,
    })
}

fn check_factor(f: &FeatureMap, s: usize) -> Result<(), FusionError> {
    if s == 0 || !f.height().is_multiple_of(s) || !f.width().is_multiple_of(s) {
        return Err(FusionError::IndivisibleShape {
            height: f.height(),
            width: f.width(),
            factor: s,
        });
    }
    Ok(())
}

/// Space-to-channel rearrangement: `(c, i, j)` moves to
/// `(c s^2 + (i mod s) s + (j mod s), i / s, j / s)`.
pub fn channel_transform(f: &FeatureMap, s: usize) -> Result<FeatureMap, FusionError> {
    check_factor(f, s)?;
    let (c, h, w) = f.shape();
    let mut out = FeatureMap::zeros(c * s * s, h / s, w / s);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out.set(ch * s * s + (i % s) * s + j % s, i / s, j / s, f.get(ch, i, j));
            }
        }
    }
    Ok(out)
}

/// Inverse of [`channel_transform`].
pub fn inverse_channel_transform(f: &FeatureMap, s: usize) -> Result<FeatureMap, FusionError> {
    let (c2, h2, w2) = f.shape();
    if s == 0 || c2 % (s * s) != 0 {
        return Err(FusionError::ShapeMismatch(format!("{c2} channels are not a multiple of {s}^2")));
    }
    let c = c2 / (s * s);
    let mut out = FeatureMap::zeros(c, h2 * s, w2 * s);
    for ch in 0..c {
        for i in 0..h2 * s {
            for j in 0..w2 * s {
                out.set(ch, i, j, f.get(ch * s * s + (i % s) * s + j % s, i / s, j / s));
            }
        }
    }
    Ok(out)
}

/// Per-channel spatial mean spread back over the grid.
pub fn mean_map(f: &FeatureMap) -> FeatureMap {
    let (c, h, w) = f.shape();
    let means = f.channel_means();
    let data = means.iter().flat_map(|&m| std::iter::repeat_n(m, h * w)).collect();
    FeatureMap::new(c, h, w, data).expect("mean map keeps the shape")
}

/// Even-position bits of `x` packed together.
fn compact_bits(mut x: u64) -> u64 {
    x &= 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x
}

/// Morton traversal of an `h x w` grid after zero padding each side to a
/// power of two. The column bit is the least significant bit of each pair.
/// Returns `(row, col)` over the padded grid.
pub fn morton_order(height: usize, width: usize) -> Vec<(usize, usize)> {
    let (ph, pw) = (height.next_power_of_two(), width.next_power_of_two());
    let side = ph.max(pw) as u64;
    let mut order = Vec::with_capacity(ph * pw);
    for key in 0..side * side {
        let col = compact_bits(key) as usize;
        let row = compact_bits(key >> 1) as usize;
        if row < ph && col < pw {
            order.push((row, col));
        }
    }
    order
}

/// Tokens of a serialized map pair, one channel vector per token, token-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Morton positions of one half, over the padded grid.
    pub order: Vec<(usize, usize)>,
    pub data: Vec<f64>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn token(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    /// The values of one channel along the sequence.
    pub fn lane(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.data[t * self.channels + c]).collect()
    }

    /// Same layout with every lane replaced.
    pub fn with_lanes(&self, lanes: &[Vec<f64>]) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for (c, lane) in lanes.iter().enumerate() {
            for (t, &v) in lane.iter().enumerate() {
                data[t * self.channels + c] = v;
            }
        }
        Self { data, ..self.clone() }
    }
}

/// Morton serialization of `i` followed by that of `i_bar`. Padding positions
/// carry zero tokens.
pub fn z_order_serialize(i: &FeatureMap, i_bar: &FeatureMap) -> Result<TokenSequence, FusionError> {
    i.expect_shape(i_bar)?;
    let (c, h, w) = i.shape();
    let order = morton_order(h, w);
    let mut data = Vec::with_capacity(2 * order.len() * c);
    for f in [i, i_bar] {
        for &(row, col) in &order {
            for ch in 0..c {
                data.push(if row < h && col < w { f.get(ch, row, col) } else { 0.0 });
            }
        }
    }
    Ok(TokenSequence {
        channels: c,
        height: h,
        width: w,
        order,
        data,
    })
}

/// Reads half `half` (0 for the map, 1 for its mean) of a sequence back onto
/// the original grid, dropping padding tokens.
pub fn z_order_deserialize(seq: &TokenSequence, half: usize) -> FeatureMap {
    assert!(half < 2, "a serialized pair has two halves");
    let mut out = FeatureMap::zeros(seq.channels, seq.height, seq.width);
    let base = half * seq.order.len();
    for (k, &(row, col)) in seq.order.iter().enumerate() {
        if row < seq.height && col < seq.width {
            for (ch, &v) in seq.token(base + k).iter().enumerate() {
                out.set(ch, row, col, v);
            }
        }
    }
    out
}

/// Normalizes every pixel's channel vector to zero mean and unit variance.
pub fn layer_norm_tokens(f: &FeatureMap) -> FeatureMap {
    let (c, h, w) = f.shape();
    let mut out = f.clone();
    for i in 0..h {
        for j in 0..w {
            let mean = (0..c).map(|ch| f.get(ch, i, j)).sum::<f64>() / c as f64;
            let var = (0..c).map(|ch| (f.get(ch, i, j) - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for ch in 0..c {
                out.set(ch, i, j, (f.get(ch, i, j) - mean) * inv);
            }
        }
    }
    out
}

/// Value, key and query channel projections, each `C x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MambaWeights {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
}

impl MambaWeights {
    pub fn seeded<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            w1: seeded_matrix(channels, channels, channels, rng),
            w2: seeded_matrix(channels, channels, channels, rng),
            w3: seeded_matrix(channels, channels, channels, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanMambaOutput {
    /// `C x H x W` value map.
    pub value: FeatureMap,
    /// `C x C` key-query interaction.
    pub key_query: DMatrix<f64>,
}

/// Serializes a map with its mean map, runs every channel lane through the
/// causal kernel of `p`, and returns the outputs at the mean-map tokens,
/// which have seen the whole map.
fn scan_with_mean(f: &FeatureMap, p: &SsmParams) -> Result<FeatureMap, FusionError> {
    let seq = z_order_serialize(f, &mean_map(f))?;
    let kernel = mamba_kernel(p, seq.len())?;
    let lanes: Vec<Vec<f64>> = (0..seq.channels).map(|c| causal_conv(&seq.lane(c), &kernel)).collect();
    Ok(z_order_deserialize(&seq.with_lanes(&lanes), 1))
}

/// Mean-Mamba block over a channel-transformed difference map.
///
/// Value: `LN(scan(W1 dF)) + W1 dF`. Key-query:
/// `scan(c^-1/2 (W2 dF)(W3 dF)^T)` with the `C x C` product read as a
/// one-channel map.
pub fn mean_mamba_block(delta: &FeatureMap, p: &SsmParams, w: &MambaWeights) -> Result<MeanMambaOutput, FusionError> {
    let (c, h, wd) = delta.shape();
    for (name, m) in [("w1", &w.w1), ("w2", &w.w2), ("w3", &w.w3)] {
        if m.shape() != (c, c) {
            return Err(FusionError::ShapeMismatch(format!("{name} is {:?}, expected {c}x{c}", m.shape())));
        }
    }
    let x = delta.as_matrix();
    let projected = FeatureMap::from_matrix(&(&w.w1 * &x), h, wd)?;
    let scanned = scan_with_mean(&projected, p)?;
    let value = layer_norm_tokens(&scanned).zip_with(&projected, |a, b| a + b)?;

    let kq = (&w.w2 * &x) * (&w.w3 * &x).transpose() / (c as f64).sqrt();
    let kq_map = FeatureMap::new(1, c, c, (0..c * c).map(|k| kq[(k / c, k % c)]).collect())?;
    let scanned_kq = scan_with_mean(&kq_map, p)?;
    let key_query = DMatrix::from_row_slice(c, c, scanned_kq.data());
    Ok(MeanMambaOutput { value, key_query })
}

/// `clamp(CT^-1(SoftMax_rows(W) V), 0, 1)`: the attention of the key-query
/// matrix over the value channels, restored to the original resolution.
pub fn compute_gate(key_query: &DMatrix<f64>, value: &FeatureMap, factor: usize) -> Result<FeatureMap, FusionError> {
    let c = value.channels();
    if key_query.shape() != (c, c) {
        return Err(FusionError::ShapeMismatch(format!(
            "key-query is {:?}, value has {c} channels",
            key_query.shape()
        )));
    }
    let mixed = softmax_rows(key_query) * value.as_matrix();
    let restored = inverse_channel_transform(&FeatureMap::from_matrix(&mixed, value.height(), value.width())?, factor)?;
    Ok(restored.map(|v| v.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    pub gate: FeatureMap,
    pub radar: FeatureMap,
    pub img: FeatureMap,
    /// Radar channels followed by image channels.
    pub fused: FeatureMap,
}

impl FusedFeatures {
    /// `J - gate`, the factor applied to the image branch.
    pub fn complement(&self) -> FeatureMap {
        self.gate.map(|e| 1.0 - e)
    }
}

/// `F_radar' = F~_radar * E + F_radar`, `F_img' = F~_Mimg * (J - E) + F_Mimg`.
pub fn apply_gate(
    gate: &FeatureMap,
    enhanced_radar: &FeatureMap,
    enhanced_img: &FeatureMap,
    f_radar: &FeatureMap,
    f_mimg: &FeatureMap,
) -> Result<FusedFeatures, FusionError> {
    for f in [enhanced_radar, enhanced_img, f_radar, f_mimg] {
        gate.expect_shape(f)?;
    }
    let radar = enhanced_radar.zip_with(gate, |x, e| x * e)?.zip_with(f_radar, |a, b| a + b)?;
    let img = enhanced_img.zip_with(gate, |x, e| x * (1.0 - e))?.zip_with(f_mimg, |a, b| a + b)?;
    let fused = radar.concat_channels(&img)?;
    Ok(FusedFeatures {
        gate: gate.clone(),
        radar,
        img,
        fused,
    })
}

pub fn interactive_fuse(
    key_query: &DMatrix<f64>,
    value: &FeatureMap,
    factor: usize,
    enhanced_radar: &FeatureMap,
    enhanced_img: &FeatureMap,
    f_radar: &FeatureMap,
    f_mimg: &FeatureMap,
) -> Result<FusedFeatures, FusionError> {
    let gate = compute_gate(key_query, value, factor)?;
    apply_gate(&gate, enhanced_radar, enhanced_img, f_radar, f_mimg)
}
