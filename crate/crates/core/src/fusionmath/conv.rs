use rand::Rng;

use super::{FeatureMap, FusionError};

/// Dense 2-D convolution bank, `out x in x k x k`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub data: Vec<f64>,
}

impl Conv2dWeights {
    pub fn new(out_channels: usize, in_channels: usize, kernel: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if kernel.is_multiple_of(2) {
            return Err(FusionError::ShapeMismatch(format!("kernel size {kernel} must be odd")));
        }
        if out_channels == 0 || in_channels == 0 || data.len() != out_channels * in_channels * kernel * kernel {
            return Err(FusionError::ShapeMismatch(format!(
                "{out_channels}x{in_channels}x{kernel}x{kernel} bank got {} weights",
                data.len()
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            data,
        })
    }

    /// Weights uniform in `+-1/sqrt(in * k * k)`.
    pub fn seeded<R: Rng + ?Sized>(out_channels: usize, in_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
        let data = (0..out_channels * in_channels * kernel * kernel)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self::new(out_channels, in_channels, kernel, data).expect("seeded bank shape")
    }

    pub fn zeros(channels: usize, kernel: usize) -> Self {
        Self::new(channels, channels, kernel, vec![0.0; channels * channels * kernel * kernel]).expect("zero bank shape")
    }

    /// Per-channel identity: the center tap of each diagonal filter is 1.
    pub fn identity(channels: usize, kernel: usize) -> Self {
        let mut w = Self::zeros(channels, kernel);
        let c = kernel / 2;
        for o in 0..channels {
            let k = w.offset(o, o, c, c);
            w.data[k] = 1.0;
        }
        w
    }

    pub fn weight(&self, o: usize, i: usize, di: usize, dj: usize) -> f64 {
        self.data[self.offset(o, i, di, dj)]
    }

    fn offset(&self, o: usize, i: usize, di: usize, dj: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + di) * self.kernel + dj
    }
}

/// One `k x k` filter per channel, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseWeights {
    pub channels: usize,
    pub kernel: usize,
    pub data: Vec<f64>,
}

impl DepthwiseWeights {
    pub fn new(channels: usize, kernel: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if kernel.is_multiple_of(2) || channels == 0 || data.len() != channels * kernel * kernel {
            return Err(FusionError::ShapeMismatch(format!(
                "depthwise {channels}x{kernel}x{kernel} bank got {} weights",
                data.len()
            )));
        }
        Ok(Self { channels, kernel, data })
    }

    /// Weights uniform in `+-1/k`.
    pub fn seeded<R: Rng + ?Sized>(channels: usize, kernel: usize, rng: &mut R) -> Self {
        let bound = 1.0 / kernel as f64;
        let data = (0..channels * kernel * kernel).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(channels, kernel, data).expect("seeded bank shape")
    }

    pub fn weight(&self, c: usize, di: usize, dj: usize) -> f64 {
        self.data[(c * self.kernel + di) * self.kernel + dj]
    }
}

/// Cross-correlation with symmetric zero padding; spatial size is preserved.
pub fn conv2d(input: &FeatureMap, w: &Conv2dWeights) -> Result<FeatureMap, FusionError> {
    if input.channels() != w.in_channels {
        return Err(FusionError::ShapeMismatch(format!(
            "bank expects {} input channels, map has {}",
            w.in_channels,
            input.channels()
        )));
    }
    let (_, h, wd) = input.shape();
    let half = (w.kernel / 2) as isize;
    let mut out = FeatureMap::zeros(w.out_channels, h, wd);
    for o in 0..w.out_channels {
        for i in 0..h {
            for j in 0..wd {
                let mut acc = 0.0;
                for c in 0..w.in_channels {
                    for di in 0..w.kernel {
                        let y = i as isize + di as isize - half;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for dj in 0..w.kernel {
                            let x = j as isize + dj as isize - half;
                            if x < 0 || x >= wd as isize {
                                continue;
                            }
                            acc += w.weight(o, c, di, dj) * input.get(c, y as usize, x as usize);
                        }
                    }
                }
                out.set(o, i, j, acc);
            }
        }
    }
    Ok(out)
}

pub fn depthwise_conv2d(input: &FeatureMap, w: &DepthwiseWeights) -> Result<FeatureMap, FusionError> {
    if input.channels() != w.channels {
        return Err(FusionError::ShapeMismatch(format!(
            "bank has {} channels, map has {}",
            w.channels,
            input.channels()
        )));
    }
    let (ch, h, wd) = input.shape();
    let half = (w.kernel / 2) as isize;
    let mut out = FeatureMap::zeros(ch, h, wd);
    for c in 0..ch {
        for i in 0..h {
            for j in 0..wd {
                let mut acc = 0.0;
                for di in 0..w.kernel {
                    for dj in 0..w.kernel {
                        let y = i as isize + di as isize - half;
                        let x = j as isize + dj as isize - half;
                        if y >= 0 && y < h as isize && x >= 0 && x < wd as isize {
                            acc += w.weight(c, di, dj) * input.get(c, y as usize, x as usize);
                        }
                    }
                }
                out.set(c, i, j, acc);
            }
        }
    }
    Ok(out)
}
