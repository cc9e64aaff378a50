use std::collections::BTreeMap;

use serde::Serialize;

use super::DensifyError;
use crate::types::ProjectedPoint;

/// Projected points of one instance that survived depth filtering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstancePointSet {
    pub instance_id: u32,
    pub points: Vec<ProjectedPoint>,
    /// The modal `floor(d)` bucket.
    pub mode_floor: i64,
    /// Mean depth of the retained points, used as the common depth of
    /// generated points.
    pub mode_depth: f64,
}

impl InstancePointSet {
    pub fn pixels(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p.u, p.v]).collect()
    }
}

/// Keeps the points whose `floor(d)` equals the most frequent floored depth.
/// Ties between buckets go to the nearest one. Input order is preserved.
pub fn depth_mode_filter(instance_id: u32, raw: &[ProjectedPoint]) -> Result<InstancePointSet, DensifyError> {
    if raw.is_empty() {
        return Err(DensifyError::EmptyInstance { instance_id });
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for p in raw {
        *counts.entry(p.d.floor() as i64).or_default() += 1;
    }
    let mut mode_floor = 0;
    let mut best = 0;
    for (&bucket, &n) in &counts {
        if n > best {
            best = n;
            mode_floor = bucket;
        }
    }
    let points: Vec<ProjectedPoint> = raw.iter().copied().filter(|p| p.d.floor() as i64 == mode_floor).collect();
    let lo = points.iter().map(|p| p.d).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.d).fold(f64::NEG_INFINITY, f64::max);
    let mean = points.iter().map(|p| p.d).sum::<f64>() / points.len() as f64;
    Ok(InstancePointSet {
        instance_id,
        points,
        mode_floor,
        mode_depth: mean.clamp(lo, hi),
    })
}
