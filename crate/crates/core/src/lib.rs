//! Radar point-cloud densification guided by camera instance masks.
//!
//! The crate covers the geometric pipeline (projection, mask association,
//! depth-mode filtering, density-ranked key points, Gaussian surface
//! simulation, curvature-weighted outlines, back-projection), the density
//! diagnostics used to inspect its effect (KDE surfaces, image-grid counts,
//! BEV pillar statistics), and small forward reference kernels for the
//! radar/camera fusion arithmetic and detection losses.

pub mod check;
pub mod config;
pub mod density;
pub mod densify;
pub mod fusionmath;
pub mod geometry;
pub mod io;
pub mod rng;
pub mod synthetic;
pub mod types;

pub use config::{BandwidthRule, DistanceForm, Kernel, LossConfig, PillarConfig, PillarPreset, SimDenConfig, ToolkitConfig};
pub use types::{CalibratedFrame, Calibration, InstanceMask, ProjectedPoint, RadarPoint};
