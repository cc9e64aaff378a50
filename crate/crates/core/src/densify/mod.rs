//! Instance-level point densification: depth-mode filtering, key-point
//! selection, Gaussian surface simulation, and curvature-weighted outline
//! generation.

mod curvature;
mod filter;
mod keys;
mod pipeline;
mod simulate;

pub use curvature::{interpolate_outline, path_curvature, segment_curvature};
pub use filter::{depth_mode_filter, InstancePointSet};
pub use keys::{select_key_points, CovarianceSource, KeyPointSet};
pub use pipeline::{
    densify_frame, densify_instance, CurvatureSummary, DensifiedInstance, FrameReport, GenerationMeta,
    InstanceReport, InstanceStatus,
};
pub use simulate::gaussian_simulate;

use thiserror::Error;

use crate::config::ConfigError;
use crate::geometry::GeometryError;
use crate::types::FrameError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensifyError {
    #[error("segment of length {length:e} is too short for a curvature estimate")]
    ZeroSegment { length: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("instance {instance_id} has no associated radar points")]
    EmptyInstance { instance_id: u32 },
    #[error("instance id {0} appears in more than one mask")]
    DuplicateInstance(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
