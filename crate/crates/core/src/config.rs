//! Configuration records and the TOML configuration file.
//!
//! A configuration file has three optional tables. Every key is optional and
//! falls back to the default shown here:
//!
//! ```toml
//! [simden]
//! kernel = "gauss"               # gauss | epanechnikov | uniform | triangle | cosine
//! bandwidth_rule = "silverman"   # scott | silverman | { user_defined = 0.5 }
//! distance = "per_dimension"     # per_dimension | manhattan
//! gamma = 1.0                    # Gauss kernel scaling factor (> 0)
//! max_key_points = 4             # key points kept per instance (>= 1)
//! edge_point_count = 20          # hull resampling count (>= 3)
//! referring_point_count = 10     # points inserted per edge segment (>= 1)
//! points_per_instance = 200      # generated points per instance (>= 1)
//! outline_fraction = 0.3         # share of the budget given to outline points, [0, 1]
//! rng_seed = 42                  # integer, or "0x..." hex string for seeds above 2^63-1
//!
//! [pillars]                      # meters; defaults are the VoD geometry
//! x_range = [0.0, 51.2]
//! y_range = [-25.6, 25.6]
//! z_range = [-3.0, 2.0]
//! pillar_size = [0.16, 0.16, 0.16]
//! max_pillars = 40000
//! max_points_per_pillar = 5
//!
//! [loss]
//! alpha = 0.25                   # focal class weight, (0, 1)
//! sigma = 2.0                    # focal exponent, >= 0
//! beta = 0.1                     # smooth-L1 threshold, > 0
//! lambdas = [1.0, 1.0, 2.0, 0.2] # cls, occ, loc, dir weights, >= 0
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config field `{field}` = {value} is out of range: {requirement}")]
    OutOfRange {
        field: &'static str,
        value: String,
        requirement: &'static str,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config serialization error: {0}")]
    Serialize(String),
}

fn out_of_range(field: &'static str, value: impl std::fmt::Display, requirement: &'static str) -> ConfigError {
    ConfigError::OutOfRange {
        field,
        value: value.to_string(),
        requirement,
    }
}

/// Smoothing kernels available for density estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gauss,
    Epanechnikov,
    Uniform,
    Triangle,
    Cosine,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Gauss,
        Kernel::Epanechnikov,
        Kernel::Uniform,
        Kernel::Triangle,
        Kernel::Cosine,
    ];
}

/// Rule for choosing the per-dimension KDE bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Scott,
    #[default]
    Silverman,
    UserDefined(f64),
}

/// How sample offsets are reduced to a scalar scaled distance.
///
/// `PerDimension` is the Euclidean norm of the bandwidth-scaled offset.
/// `Manhattan` is the L1 norm of the scaled offset, i.e. an entry of the
/// Manhattan distance matrix of the scaled points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceForm {
    #[default]
    PerDimension,
    Manhattan,
}

/// Parameters of the densification pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimDenConfig {
    pub kernel: Kernel,
    pub bandwidth_rule: BandwidthRule,
    pub distance: DistanceForm,
    pub gamma: f64,
    pub max_key_points: usize,
    pub edge_point_count: usize,
    pub referring_point_count: usize,
    pub points_per_instance: usize,
    pub outline_fraction: f64,
    #[serde(with = "seed_repr")]
    pub rng_seed: u64,
}

impl Default for SimDenConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gauss,
            bandwidth_rule: BandwidthRule::Silverman,
            distance: DistanceForm::PerDimension,
            gamma: 1.0,
            max_key_points: 4,
            edge_point_count: 20,
            referring_point_count: 10,
            points_per_instance: 200,
            outline_fraction: 0.3,
            rng_seed: 42,
        }
    }
}

impl SimDenConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(out_of_range("gamma", self.gamma, "must be finite and > 0"));
        }
        if let BandwidthRule::UserDefined(b) = self.bandwidth_rule {
            if !(b > 0.0 && b.is_finite()) {
                return Err(out_of_range("bandwidth_rule", b, "user-defined bandwidth must be finite and > 0"));
            }
        }
        if self.max_key_points < 1 {
            return Err(out_of_range("max_key_points", self.max_key_points, "must be >= 1"));
        }
        if self.edge_point_count < 3 {
            return Err(out_of_range("edge_point_count", self.edge_point_count, "must be >= 3"));
        }
        if self.referring_point_count < 1 {
            return Err(out_of_range(
                "referring_point_count",
                self.referring_point_count,
                "must be >= 1",
            ));
        }
        if self.points_per_instance < 1 {
            return Err(out_of_range("points_per_instance", self.points_per_instance, "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.outline_fraction) {
            return Err(out_of_range("outline_fraction", self.outline_fraction, "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Splits `points_per_instance` into (surface, outline) budgets.
    /// The outline share is rounded down; the remainder goes to the surface.
    pub fn budget_split(&self) -> (usize, usize) {
        let total = self.points_per_instance;
        let outline = ((total as f64) * self.outline_fraction + 1e-9).floor() as usize;
        let outline = outline.min(total);
        (total - outline, outline)
    }
}

/// Named pillar geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PillarPreset {
    Vod,
    Tj4d,
    Astyx,
    /// 1 m x 1 m BEV cells over the VoD range, used for point-count statistics.
    Bev1m,
}

impl std::str::FromStr for PillarPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vod" => Ok(Self::Vod),
            "tj4d" | "tj4dradset" => Ok(Self::Tj4d),
            "astyx" => Ok(Self::Astyx),
            "bev1m" => Ok(Self::Bev1m),
            other => Err(format!("unknown pillar preset `{other}` (expected vod, tj4d, astyx or bev1m)")),
        }
    }
}

/// BEV pillar grid geometry. Ranges are `[min, max]` in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PillarConfig {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub pillar_size: [f64; 3],
    pub max_pillars: usize,
    pub max_points_per_pillar: usize,
}

impl Default for PillarConfig {
    fn default() -> Self {
        Self::preset(PillarPreset::Vod)
    }
}

impl PillarConfig {
    /// Preset geometries. Caps use the inference-time pillar limit (4.0e4).
    pub fn preset(preset: PillarPreset) -> Self {
        match preset {
            PillarPreset::Vod => Self {
                x_range: [0.0, 51.2],
                y_range: [-25.6, 25.6],
                z_range: [-3.0, 2.0],
                pillar_size: [0.16, 0.16, 0.16],
                max_pillars: 40_000,
                max_points_per_pillar: 5,
            },
            PillarPreset::Tj4d => Self {
                x_range: [0.0, 69.12],
                y_range: [-39.68, 39.68],
                z_range: [-4.0, 2.0],
                pillar_size: [0.32, 0.32, 0.32],
                max_pillars: 40_000,
                max_points_per_pillar: 5,
            },
            PillarPreset::Astyx => Self {
                x_range: [0.0, 76.8],
                y_range: [-40.96, 40.96],
                z_range: [-3.0, 1.0],
                pillar_size: [0.16, 0.16, 4.0],
                max_pillars: 40_000,
                max_points_per_pillar: 5,
            },
            PillarPreset::Bev1m => Self {
                x_range: [0.0, 51.2],
                y_range: [-25.6, 25.6],
                z_range: [-3.0, 2.0],
                pillar_size: [1.0, 1.0, 5.0],
                max_pillars: 40_000,
                max_points_per_pillar: 1_000_000,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ranges: [(&'static str, [f64; 2]); 3] =
            [("x_range", self.x_range), ("y_range", self.y_range), ("z_range", self.z_range)];
        for (field, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(out_of_range(field, format!("[{lo}, {hi}]"), "must be finite with max > min"));
            }
        }
        let sizes: [&'static str; 3] = ["pillar_size[0]", "pillar_size[1]", "pillar_size[2]"];
        for (field, s) in sizes.into_iter().zip(self.pillar_size) {
            if !(s > 0.0 && s.is_finite()) {
                return Err(out_of_range(field, s, "must be finite and > 0"));
            }
        }
        if self.max_pillars < 1 {
            return Err(out_of_range("max_pillars", self.max_pillars, "must be >= 1"));
        }
        if self.max_points_per_pillar < 1 {
            return Err(out_of_range("max_points_per_pillar", self.max_points_per_pillar, "must be >= 1"));
        }
        Ok(())
    }

    /// Number of pillar columns along x and y.
    pub fn grid_dims(&self) -> (usize, usize) {
        (
            cell_count(self.x_range[1] - self.x_range[0], self.pillar_size[0]),
            cell_count(self.y_range[1] - self.y_range[0], self.pillar_size[1]),
        )
    }
}

/// Cells needed to cover `extent` with `size`; extents that are an integer
/// multiple of `size` up to rounding noise (51.2 / 0.16) are not rounded up.
pub(crate) fn cell_count(extent: f64, size: f64) -> usize {
    let ratio = extent / size;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    (n as usize).max(1)
}

/// Loss weights and shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub lambdas: [f64; 4],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            sigma: 2.0,
            beta: 0.1,
            lambdas: [1.0, 1.0, 2.0, 0.2],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(out_of_range("alpha", self.alpha, "must lie in (0, 1)"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(out_of_range("sigma", self.sigma, "must be finite and >= 0"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(out_of_range("beta", self.beta, "must be finite and > 0"));
        }
        let names: [&'static str; 4] = ["lambdas[0]", "lambdas[1]", "lambdas[2]", "lambdas[3]"];
        for (field, l) in names.into_iter().zip(self.lambdas) {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(out_of_range(field, l, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// The full configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub simden: SimDenConfig,
    pub pillars: PillarConfig,
    pub loss: LossConfig,
}

impl ToolkitConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.simden.validate()?;
        self.pillars.validate()?;
        self.loss.validate()
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as
/// `"0x..."` strings. Both forms are accepted on input.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&format!("{seed:#x}")),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom("rng_seed must be nonnegative")),
            Repr::Str(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => t.parse::<u64>(),
                };
                parsed.map_err(|e| de::Error::custom(format!("invalid rng_seed `{s}`: {e}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ToolkitConfig::default().validate().unwrap();
        for p in [PillarPreset::Vod, PillarPreset::Tj4d, PillarPreset::Astyx, PillarPreset::Bev1m] {
            PillarConfig::preset(p).validate().unwrap();
        }
    }

    #[test]
    fn default_budget_split_is_140_60() {
        assert_eq!(SimDenConfig::default().budget_split(), (140, 60));
        let cfg = SimDenConfig {
            points_per_instance: 7,
            ..Default::default()
        };
        assert_eq!(cfg.budget_split(), (5, 2));
        let cfg = SimDenConfig {
            outline_fraction: 0.0,
            ..Default::default()
        };
        assert_eq!(cfg.budget_split(), (200, 0));
    }

    fn field_of(err: ConfigError) -> &'static str {
        match err {
            ConfigError::OutOfRange { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_simden_field_has_its_own_error() {
        let base = SimDenConfig::default();
        let cases: Vec<(SimDenConfig, &str)> = vec![
            (SimDenConfig { gamma: 0.0, ..base.clone() }, "gamma"),
            (
                SimDenConfig {
                    bandwidth_rule: BandwidthRule::UserDefined(-1.0),
                    ..base.clone()
                },
                "bandwidth_rule",
            ),
            (SimDenConfig { max_key_points: 0, ..base.clone() }, "max_key_points"),
            (SimDenConfig { edge_point_count: 2, ..base.clone() }, "edge_point_count"),
            (
                SimDenConfig {
                    referring_point_count: 0,
                    ..base.clone()
                },
                "referring_point_count",
            ),
            (
                SimDenConfig {
                    points_per_instance: 0,
                    ..base.clone()
                },
                "points_per_instance",
            ),
            (
                SimDenConfig {
                    outline_fraction: 1.5,
                    ..base.clone()
                },
                "outline_fraction",
            ),
        ];
        for (cfg, field) in cases {
            assert_eq!(field_of(cfg.validate().unwrap_err()), field);
        }
    }

    #[test]
    fn every_pillar_and_loss_field_has_its_own_error() {
        let p = PillarConfig::default();
        let cases: Vec<(PillarConfig, &str)> = vec![
            (PillarConfig { x_range: [1.0, 1.0], ..p.clone() }, "x_range"),
            (PillarConfig { y_range: [2.0, 1.0], ..p.clone() }, "y_range"),
            (PillarConfig { z_range: [0.0, f64::NAN], ..p.clone() }, "z_range"),
            (PillarConfig { pillar_size: [0.0, 1.0, 1.0], ..p.clone() }, "pillar_size[0]"),
            (PillarConfig { pillar_size: [1.0, -1.0, 1.0], ..p.clone() }, "pillar_size[1]"),
            (PillarConfig { pillar_size: [1.0, 1.0, 0.0], ..p.clone() }, "pillar_size[2]"),
            (PillarConfig { max_pillars: 0, ..p.clone() }, "max_pillars"),
            (PillarConfig { max_points_per_pillar: 0, ..p.clone() }, "max_points_per_pillar"),
        ];
        for (cfg, field) in cases {
            assert_eq!(field_of(cfg.validate().unwrap_err()), field);
        }

        let l = LossConfig::default();
        let cases: Vec<(LossConfig, &str)> = vec![
            (LossConfig { alpha: 1.0, ..l.clone() }, "alpha"),
            (LossConfig { sigma: -0.5, ..l.clone() }, "sigma"),
            (LossConfig { beta: 0.0, ..l.clone() }, "beta"),
            (LossConfig { lambdas: [1.0, 1.0, -2.0, 0.2], ..l.clone() }, "lambdas[2]"),
        ];
        for (cfg, field) in cases {
            assert_eq!(field_of(cfg.validate().unwrap_err()), field);
        }
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ToolkitConfig::from_toml_str(
            "[simden]\nkernel = \"cosine\"\nbandwidth_rule = { user_defined = 0.5 }\n",
        )
        .unwrap();
        assert_eq!(cfg.simden.kernel, Kernel::Cosine);
        assert_eq!(cfg.simden.bandwidth_rule, BandwidthRule::UserDefined(0.5));
        assert_eq!(cfg.simden.points_per_instance, 200);
        assert_eq!(cfg.loss, LossConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(
            ToolkitConfig::from_toml_str("[simden]\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            ToolkitConfig::from_toml_str("[loss]\nbeta = -1.0\n"),
            Err(ConfigError::OutOfRange { field: "beta", .. })
        ));
    }

    #[test]
    fn large_seed_round_trips_as_hex() {
        let mut cfg = ToolkitConfig::default();
        cfg.simden.rng_seed = u64::MAX - 5;
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("0xfffffffffffffffa"));
        assert_eq!(ToolkitConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn copies_are_independent() {
        let a = ToolkitConfig::default();
        let mut b = a.clone();
        b.simden.gamma = 3.0;
        b.pillars.x_range[0] = -1.0;
        assert_eq!(a.simden.gamma, 1.0);
        assert_eq!(a.pillars.x_range[0], 0.0);
        assert_ne!(a, b);
    }

    #[test]
    fn vod_grid_is_320_by_320() {
        assert_eq!(PillarConfig::preset(PillarPreset::Vod).grid_dims(), (320, 320));
        assert_eq!(PillarConfig::preset(PillarPreset::Tj4d).grid_dims(), (216, 248));
        assert_eq!(PillarConfig::preset(PillarPreset::Astyx).grid_dims(), (480, 512));
        assert_eq!(PillarConfig::preset(PillarPreset::Bev1m).grid_dims(), (52, 52));
    }
}
