use super::FusionError;

/// Diagonal continuous-time state-space system with scalar input and output.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub delta: f64,
}

impl SsmParams {
    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let n = self.a.len();
        if n == 0 || self.b.len() != n || self.c.len() != n {
            return Err(FusionError::ShapeMismatch(format!(
                "A, B, C lengths {}, {}, {}",
                n,
                self.b.len(),
                self.c.len()
            )));
        }
        if let Some((index, &value)) = self.a.iter().enumerate().find(|(_, &a)| !(a < 0.0)) {
            return Err(FusionError::UnstableParameter { index, value });
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(FusionError::InvalidParameter(format!("step size {} must be positive", self.delta)));
        }
        if self.a.iter().chain(&self.b).chain(&self.c).any(|v| !v.is_finite()) || !self.d.is_finite() {
            return Err(FusionError::InvalidParameter("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Zero-order-hold discretization of the diagonal system.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

/// `a_bar = exp(delta a)`, `b_bar = (a_bar - 1) / a * b`. The difference is
/// evaluated with `exp_m1` so small steps keep full precision.
pub fn zoh_discretize(p: &SsmParams) -> Result<Discretized, FusionError> {
    p.validate()?;
    let a_bar = p.a.iter().map(|&a| (p.delta * a).exp()).collect();
    let b_bar = p.a.iter().zip(&p.b).map(|(&a, &b)| (p.delta * a).exp_m1() / a * b).collect();
    Ok(Discretized { a_bar, b_bar })
}

/// Runs the recurrence `h_t = a_bar h_{t-1} + b_bar s_t`,
/// `y_t = c . h_t + d s_t` from a zero state. `C` and `D` are used as given.
pub fn ssm_scan(p: &SsmParams, s: &[f64]) -> Result<Vec<f64>, FusionError> {
    let z = zoh_discretize(p)?;
    let mut h = vec![0.0; p.state_dim()];
    Ok(s.iter()
        .map(|&x| {
            let mut y = p.d * x;
            for n in 0..h.len() {
                h[n] = z.a_bar[n] * h[n] + z.b_bar[n] * x;
                y += p.c[n] * h[n];
            }
            y
        })
        .collect())
}

/// Impulse response `k_t = sum_n c_n a_bar_n^t b_bar_n` for `t < length`.
pub fn mamba_kernel(p: &SsmParams, length: usize) -> Result<Vec<f64>, FusionError> {
    if length == 0 {
        return Err(FusionError::InvalidParameter("kernel length must be at least 1".into()));
    }
    let z = zoh_discretize(p)?;
    let mut power: Vec<f64> = z.b_bar.clone();
    let mut k = Vec::with_capacity(length);
    for _ in 0..length {
        k.push(p.c.iter().zip(&power).map(|(c, x)| c * x).sum());
        for (x, a) in power.iter_mut().zip(&z.a_bar) {
            *x *= a;
        }
    }
    Ok(k)
}

/// `y_t = sum_{j <= t} k_j s_{t-j}`; taps past the kernel end count as zero.
pub fn causal_conv(s: &[f64], k: &[f64]) -> Vec<f64> {
    (0..s.len())
        .map(|t| (0..=t.min(k.len().saturating_sub(1))).map(|j| k[j] * s[t - j]).sum())
        .collect()
}
