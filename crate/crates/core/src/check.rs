//! Self-check suite for the fusion arithmetic: every property is evaluated on
//! seeded inputs and reported with its measured error and tolerance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::config::LossConfig;
use crate::fusionmath::{
    apply_gate, attention, causal_conv, channel_transform, compensatory_attention, cross_entropy_dir,
    cross_entropy_dir_grad, feature_difference_stack, focal_loss, focal_loss_grad, interactive_fuse,
    inverse_channel_transform, layer_norm_tokens, mamba_kernel, mean_mamba_block, mean_map, morton_order,
    multi_receptive_enhance, silu, smooth_l1, smooth_l1_grad, softmax_rows, ssm_scan, total_loss, zoh_discretize,
    AttentionWeights, Conv2dWeights, DepthwiseWeights, FeatureMap, LossComponents, MambaWeights, SsmParams,
};
use crate::rng::{child_seed, seeded_rng, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    /// Spatial side lengths of the feature maps used by map properties.
    pub sizes: Vec<usize>,
    /// Random systems per SSM property.
    pub trials: usize,
    /// Multiplies every tolerance.
    pub tolerance_scale: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            sizes: vec![4, 8],
            trials: 100,
            tolerance_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub property: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub records: Vec<CheckRecord>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed)
    }
}

struct Recorder {
    scale: f64,
    records: Vec<CheckRecord>,
}

impl Recorder {
    fn push(&mut self, property: impl Into<String>, measured: f64, tolerance: f64) {
        let tolerance = tolerance * self.scale;
        self.records.push(CheckRecord {
            property: property.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        });
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_ssm(rng: &mut SimRng) -> SsmParams {
    let n = rng.random_range(1..=8);
    SsmParams {
        a: (0..n).map(|_| -rng.random_range(0.05..3.0)).collect(),
        b: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        c: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        d: rng.random_range(-1.0..1.0),
        delta: rng.random_range(0.01..1.0),
    }
}

/// Runs every property. Panics only on invalid options.
pub fn run_checks(opts: &CheckOptions) -> CheckReport {
    assert!(opts.tolerance_scale >= 0.0, "tolerance scale must be non-negative");
    assert!(!opts.sizes.is_empty() && opts.sizes.iter().all(|&s| s > 0), "sizes must be positive");
    let mut rec = Recorder {
        scale: opts.tolerance_scale,
        records: Vec::new(),
    };
    let mut rng = seeded_rng(opts.seed);

    activation_checks(&mut rec);
    for &size in &opts.sizes {
        map_checks(&mut rec, size, &mut seeded_rng(child_seed(opts.seed, size as u64)));
    }
    ssm_checks(&mut rec, opts.trials.max(1), &mut rng);
    loss_checks(&mut rec, &mut rng);
    determinism_check(&mut rec, opts);

    CheckReport {
        seed: opts.seed,
        records: rec.records,
    }
}

fn activation_checks(rec: &mut Recorder) {
    rec.push("silu_zero", silu(0.0).abs(), 0.0);
    let grid: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
    let violations = grid.windows(2).filter(|w| silu(w[1]) < silu(w[0])).count();
    rec.push("silu_monotone_nonnegative", violations as f64, 0.0);
}

fn map_checks(rec: &mut Recorder, size: usize, rng: &mut SimRng) {
    let tag = |name: &str| format!("{name}[{size}x{size}]");
    let c = 2;
    let f = FeatureMap::random(c, size, size, rng);

    let zero_banks = vec![Conv2dWeights::zeros(c, 3), Conv2dWeights::zeros(c, 5), Conv2dWeights::zeros(c, 9)];
    let residual = multi_receptive_enhance(&f, &zero_banks).expect("shapes agree");
    rec.push(tag("receptive_residual_identity"), residual.max_abs_diff(&f), 0.0);

    let banks: Vec<_> = [3, 5, 9].iter().map(|&k| Conv2dWeights::seeded(c, c, k, rng)).collect();
    let f_radar = multi_receptive_enhance(&f, &banks).expect("shapes agree");
    let f_img_raw = FeatureMap::random(c, size, size, rng);
    let f_img = multi_receptive_enhance(&f_img_raw, &banks).expect("shapes agree");
    let aw = AttentionWeights::seeded(c, 3, rng);
    let att = compensatory_attention(&f_radar, &f_img, &f_img_raw, &aw).expect("shapes agree");
    let row_err = att.attention.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    rec.push(tag("attention_softmax_rows"), row_err, 1e-12);
    let annihilated = compensatory_attention(&f_radar, &f_img, &FeatureMap::zeros(c, size, size), &aw)
        .expect("shapes agree")
        .output
        .data()
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    rec.push(tag("attention_zero_image"), annihilated, 0.0);

    let q = DMatrix::from_fn(c + 1, 3, |_, _| rng.random_range(-2.0..2.0));
    let key_row: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let k = DMatrix::from_fn(c + 1, 3, |_, j| key_row[j]);
    let v = DVector::from_fn(c + 1, |_, _| rng.random_range(-2.0..2.0));
    let (out, _) = attention(&q, &k, &v).expect("shapes agree");
    let mean = v.mean();
    rec.push(tag("attention_uniform_keys"), out.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max), 1e-14);

    let layers: Vec<_> = (0..2).map(|_| DepthwiseWeights::seeded(c, 3, rng)).collect();
    let stack = feature_difference_stack(&f_radar, &att.output, &layers, &layers).expect("shapes agree");
    let same = feature_difference_stack(&f, &f, &[], &[]).expect("shapes agree");
    let zero_delta = same.delta.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
    rec.push(tag("difference_of_equal_maps"), zero_delta + same.enhanced_radar.max_abs_diff(&f), 0.0);

    let s = if size.is_multiple_of(2) { 2 } else { 1 };
    let ct = channel_transform(&stack.delta, s).expect("divisible");
    let back = inverse_channel_transform(&ct, s).expect("divisible");
    rec.push(tag("channel_transform_round_trip"), back.max_abs_diff(&stack.delta), 0.0);

    let mm = mean_map(&ct);
    let spread = (0..mm.channels())
        .map(|ch| {
            let vals: Vec<f64> = (0..mm.height()).flat_map(|i| (0..mm.width()).map(move |j| (i, j))).map(|(i, j)| mm.get(ch, i, j)).collect();
            vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    rec.push(tag("mean_map_constant"), spread, 0.0);

    let order = morton_order(size, size);
    let side = size.next_power_of_two();
    let mut brute: Vec<(usize, usize)> = (0..side).flat_map(|r| (0..side).map(move |col| (r, col))).collect();
    brute.sort_by_key(|&(r, col)| interleave(r, col));
    let mismatches = order.iter().zip(&brute).filter(|(a, b)| a != b).count() + order.len().abs_diff(brute.len());
    rec.push(tag("z_order_matches_bit_interleave"), mismatches as f64, 0.0);

    let ln = layer_norm_tokens(&FeatureMap::random(4, size, size, rng));
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for i in 0..size {
        for j in 0..size {
            let vals: Vec<f64> = (0..4).map(|ch| ln.get(ch, i, j)).collect();
            let m = vals.iter().sum::<f64>() / 4.0;
            let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
            worst_mean = worst_mean.max(m.abs());
            worst_var = worst_var.max((var - 1.0).abs());
        }
    }
    rec.push(tag("layer_norm_mean"), worst_mean, 1e-10);
    rec.push(tag("layer_norm_variance"), worst_var, 1e-8);

    let p = random_ssm(rng);
    let mw = MambaWeights::seeded(ct.channels(), rng);
    let block = mean_mamba_block(&ct, &p, &mw).expect("shapes agree");
    let zero = mean_mamba_block(&FeatureMap::zeros(ct.channels(), ct.height(), ct.width()), &p, &mw).expect("shapes agree");
    let zero_out = zero.value.data().iter().chain(zero.key_query.iter()).map(|v| v.abs()).fold(0.0, f64::max);
    rec.push(tag("mean_mamba_zero_input"), zero_out, 0.0);

    let sm = softmax_rows(&block.key_query);
    let kq_rows = sm.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    rec.push(tag("fusion_softmax_rows"), kq_rows, 1e-12);

    let fused = interactive_fuse(
        &block.key_query,
        &block.value,
        s,
        &stack.enhanced_radar,
        &stack.enhanced_img,
        &f_radar,
        &att.output,
    )
    .expect("shapes agree");
    let comp = fused.complement();
    let gate_sum = fused.gate.data().iter().zip(comp.data()).map(|(e, c)| (e + c - 1.0).abs()).fold(0.0, f64::max);
    let out_of_range = fused.gate.data().iter().filter(|e| !(0.0..=1.0).contains(*e)).count() as f64;
    rec.push(tag("gate_complement_sums_to_one"), gate_sum + out_of_range, 0.0);

    let ones = apply_gate(&FeatureMap::filled(c, size, size, 1.0), &stack.enhanced_radar, &stack.enhanced_img, &f_radar, &att.output)
        .expect("shapes agree");
    let zeros = apply_gate(&FeatureMap::zeros(c, size, size), &stack.enhanced_radar, &stack.enhanced_img, &f_radar, &att.output)
        .expect("shapes agree");
    rec.push(tag("gate_saturation"), ones.img.max_abs_diff(&att.output) + zeros.radar.max_abs_diff(&f_radar), 0.0);
}

fn interleave(row: usize, col: usize) -> u64 {
    let mut key = 0u64;
    for b in 0..32 {
        key |= (((col >> b) & 1) as u64) << (2 * b);
        key |= (((row >> b) & 1) as u64) << (2 * b + 1);
    }
    key
}

fn ssm_checks(rec: &mut Recorder, trials: usize, rng: &mut SimRng) {
    let hand = SsmParams {
        a: vec![-1.0],
        b: vec![1.0],
        c: vec![1.0],
        d: 0.0,
        delta: 2f64.ln(),
    };
    let z = zoh_discretize(&hand).expect("valid parameters");
    rec.push("zoh_hand_case", (z.a_bar[0] - 0.5).abs().max((z.b_bar[0] - 0.5).abs()), 1e-15);

    let euler = SsmParams { delta: 1e-8, ..hand.clone() };
    let z = zoh_discretize(&euler).expect("valid parameters");
    rec.push("zoh_small_step", rel_err(z.b_bar[0], 1e-8).max(rel_err(z.a_bar[0], 1.0 - 1e-8)), 1e-7);

    let unstable = SsmParams { a: vec![0.1], ..hand.clone() };
    rec.push("zoh_rejects_unstable", if zoh_discretize(&unstable).is_err() { 0.0 } else { 1.0 }, 0.0);

    let y = ssm_scan(&hand, &[1.0, 1.0, 1.0]).expect("valid parameters");
    let hand_err = y.iter().zip([0.5, 0.75, 0.875]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rec.push("scan_hand_recurrence", hand_err, 1e-15);

    let mut worst = 0.0f64;
    for _ in 0..trials {
        let p = random_ssm(rng);
        let len = rng.random_range(1..=128);
        let s: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scan = ssm_scan(&p, &s).expect("valid parameters");
        let conv = causal_conv(&s, &mamba_kernel(&p, len).expect("valid parameters"));
        let scale = scan.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for t in 0..len {
            worst = worst.max((scan[t] - conv[t] - p.d * s[t]).abs() / scale);
        }
    }
    rec.push("scan_kernel_duality", worst, 1e-6);
}

fn loss_checks(rec: &mut Recorder, rng: &mut SimRng) {
    let cfg = LossConfig::default();
    let focal = focal_loss(0.5, cfg.alpha, cfg.sigma).expect("valid probability");
    rec.push("focal_example", (focal - 0.0625).abs(), 1e-15);
    let sl = (smooth_l1(0.05, 0.0, cfg.beta) - 0.0125).abs().max((smooth_l1(0.2, 0.0, cfg.beta) - 0.15).abs());
    rec.push("smooth_l1_examples", sl, 1e-15);
    let b = cfg.beta;
    rec.push("smooth_l1_continuity", (smooth_l1(b - 1e-9, 0.0, b) - smooth_l1(b + 1e-9, 0.0, b)).abs(), 1e-8);
    let ce = (cross_entropy_dir(&[1.0, 0.0], &[0.5, 0.5]).expect("valid") - 1.0)
        .abs()
        .max((cross_entropy_dir(&[0.25; 4], &[0.25; 4]).expect("valid") - 2.0).abs());
    rec.push("cross_entropy_examples", ce, 1e-15);
    let ones = LossComponents {
        cls: 1.0,
        occ: 1.0,
        loc: 1.0,
        dir: 1.0,
    };
    rec.push("total_loss_weights", (total_loss(&ones, &cfg) - 4.2).abs(), 1e-15);

    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = rng.random_range(0.02..0.98);
        let fd = (focal_loss(p + h, cfg.alpha, cfg.sigma).unwrap() - focal_loss(p - h, cfg.alpha, cfg.sigma).unwrap()) / (2.0 * h);
        worst = worst.max(rel_err(focal_loss_grad(p, cfg.alpha, cfg.sigma).unwrap(), fd));

        let r = loop {
            let r: f64 = rng.random_range(-1.0..1.0);
            if (r.abs() - cfg.beta).abs() > 1e-3 {
                break r;
            }
        };
        let fd = (smooth_l1(r + h, 0.0, cfg.beta) - smooth_l1(r - h, 0.0, cfg.beta)) / (2.0 * h);
        worst = worst.max(rel_err(smooth_l1_grad(r, 0.0, cfg.beta), fd));

        let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pred: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let truth = [0.6, 0.4, 0.0, 0.0];
        let g = cross_entropy_dir_grad(&truth, &pred).unwrap();
        for i in 0..2 {
            let at = |x: f64| -(0..4).filter(|&j| truth[j] > 0.0).map(|j| truth[j] * if j == i { x } else { pred[j] }.log2()).sum::<f64>();
            let fd = (at(pred[i] + h) - at(pred[i] - h)) / (2.0 * h);
            worst = worst.max(rel_err(g[i], fd));
        }
    }
    rec.push("loss_gradients_finite_difference", worst, 1e-4);
}

fn determinism_check(rec: &mut Recorder, opts: &CheckOptions) {
    let size = opts.sizes[0];
    let run = || {
        let mut rng = seeded_rng(opts.seed);
        let f = FeatureMap::random(2, size, size, &mut rng);
        let banks: Vec<_> = [3, 5].iter().map(|&k| Conv2dWeights::seeded(2, 2, k, &mut rng)).collect();
        multi_receptive_enhance(&f, &banks).expect("shapes agree")
    };
    let (a, b) = (run(), run());
    let differing = a.data().iter().zip(b.data()).filter(|(x, y)| x.to_bits() != y.to_bits()).count();
    rec.push("seeded_determinism", differing as f64, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run_checks(&CheckOptions::default());
        let failed: Vec<_> = report.failures().map(|r| r.property.clone()).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(report.records.len() > 20);
    }

    #[test]
    fn zero_tolerance_exposes_inexact_properties() {
        let report = run_checks(&CheckOptions {
            tolerance_scale: 0.0,
            trials: 5,
            ..CheckOptions::default()
        });
        assert!(!report.all_passed());
        assert!(report.failures().any(|r| r.property == "scan_kernel_duality"));
    }

    #[test]
    fn odd_sizes_are_supported() {
        let report = run_checks(&CheckOptions {
            sizes: vec![3, 5],
            trials: 5,
            ..CheckOptions::default()
        });
        assert!(report.all_passed());
    }
}
