use serde::Serialize;

use super::{
    depth_mode_filter, gaussian_simulate, interpolate_outline, path_curvature, select_key_points, DensifyError,
    InstancePointSet,
};
use crate::config::SimDenConfig;
use crate::geometry::{associate_masks, extract_edge_points, insert_referring_points, project_points, GeometryError, Projector};
use crate::rng::{child_seed, seeded_rng};
use crate::types::{CalibratedFrame, InstanceMask, RadarPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureSummary {
    pub segments: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl CurvatureSummary {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            segments: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

/// What happened while densifying one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationMeta {
    pub seed: u64,
    pub config: SimDenConfig,
    pub prior_count: usize,
    pub key_count: usize,
    pub covariance_eigenvalues: [f64; 2],
    /// The hull of the instance points was degenerate, so the whole budget
    /// went to surface points.
    pub degenerate_hull: bool,
    pub referring_per_segment: usize,
    pub curvature: Option<CurvatureSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifiedInstance {
    pub instance_id: u32,
    pub surface2d: Vec<[f64; 2]>,
    pub outline2d: Vec<[f64; 2]>,
    /// Generated points in radar coordinates, surface first.
    pub generated: Vec<RadarPoint>,
    pub meta: GenerationMeta,
}

/// Generates `points_per_instance` new points for one filtered instance.
///
/// Surface points come from the key-point Gaussian. Outline points sit
/// between consecutive referring points on arcs over the edge of the
/// instance, pulled back along the arc by the curvature of their segment.
/// All generated points share the instance's modal depth and copy the
/// attributes of the nearest instance point in the image.
pub fn densify_instance(
    inst: &InstancePointSet,
    mask: &InstanceMask,
    frame: &CalibratedFrame,
    cfg: &SimDenConfig,
    seed: u64,
) -> Result<DensifiedInstance, DensifyError> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let (surface_n, outline_n) = cfg.budget_split();
    let keys = select_key_points(inst, mask, frame, cfg)?;
    let mut surface2d = gaussian_simulate(&keys, surface_n, Some(mask), &mut rng);

    let mut outline2d = Vec::with_capacity(outline_n);
    let mut degenerate_hull = false;
    let mut referring_per_segment = 0;
    let mut omegas = Vec::new();
    if outline_n > 0 {
        let mut hull_input = inst.pixels();
        hull_input.extend_from_slice(&surface2d);
        match extract_edge_points(&hull_input, cfg.edge_point_count) {
            Ok(edge) => {
                let segments = edge.vertices().len();
                let r = cfg.referring_point_count.max(outline_n.div_ceil(segments));
                referring_per_segment = r;
                let mut candidates = Vec::with_capacity(segments * r);
                for ((a, b), refs) in edge.segments().zip(insert_referring_points(&edge, r)) {
                    let mut path = Vec::with_capacity(r + 2);
                    path.push(a);
                    path.extend_from_slice(&refs);
                    path.push(b);
                    let omega = path_curvature(&path)?;
                    omegas.push(omega);
                    for k in 1..=r {
                        candidates.push(interpolate_outline(path[k], path[k - 1], omega));
                    }
                }
                let total = candidates.len();
                for k in 0..outline_n {
                    let mut p = candidates[k * total / outline_n];
                    if !mask.contains(p[0], p[1]) {
                        let (c, r) = mask.nearest_true_pixel(p[0], p[1]);
                        p = [c as f64, r as f64];
                    }
                    outline2d.push(p);
                }
            }
            Err(GeometryError::DegenerateInput(_)) => {
                degenerate_hull = true;
                surface2d.extend(gaussian_simulate(&keys, outline_n, Some(mask), &mut rng));
            }
            Err(e) => return Err(e.into()),
        }
    }

    let proj = Projector::new(frame.calibration())?;
    let priors = inst.pixels();
    let generated = surface2d
        .iter()
        .chain(&outline2d)
        .map(|&[u, v]| {
            let [x, y, z] = proj.to_radar([u, v, inst.mode_depth]);
            let nearest = nearest_index(&priors, [u, v]);
            let attrs = frame.points()[inst.points[nearest].source_index].attrs.clone();
            RadarPoint::new(x, y, z, attrs)
        })
        .collect();

    Ok(DensifiedInstance {
        instance_id: inst.instance_id,
        surface2d,
        outline2d,
        generated,
        meta: GenerationMeta {
            seed,
            config: cfg.clone(),
            prior_count: inst.points.len(),
            key_count: keys.points3d.len(),
            covariance_eigenvalues: keys.covariance_eigenvalues(),
            degenerate_hull,
            referring_per_segment,
            curvature: CurvatureSummary::of(&omegas),
        },
    })
}

/// First index of the point closest to `q`.
fn nearest_index(points: &[[f64; 2]], q: [f64; 2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Densified,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub instance_id: u32,
    pub status: InstanceStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub associated_count: usize,
    pub filtered_count: usize,
    pub mode_floor: Option<i64>,
    pub surface_count: usize,
    pub outline_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<GenerationMeta>,
}

impl InstanceReport {
    fn empty(instance_id: u32, status: InstanceStatus, reason: String) -> Self {
        Self {
            instance_id,
            status,
            reason: Some(reason),
            associated_count: 0,
            filtered_count: 0,
            mode_floor: None,
            surface_count: 0,
            outline_count: 0,
            meta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    pub seed: u64,
    pub input_points: usize,
    pub generated_points: usize,
    pub output_points: usize,
    pub instances: Vec<InstanceReport>,
}

/// Densifies every masked instance of a frame.
///
/// Instances run in ascending id order, each with its own stream derived from
/// `cfg.rng_seed` and the instance id, so results do not depend on mask order.
/// Instances without projected points are skipped and per-instance failures
/// are recorded in the report; neither aborts the frame. The output frame
/// holds the original points followed by all generated points.
pub fn densify_frame(
    frame: &CalibratedFrame,
    masks: &[InstanceMask],
    cfg: &SimDenConfig,
) -> Result<(CalibratedFrame, FrameReport), DensifyError> {
    cfg.validate()?;
    let mut order: Vec<&InstanceMask> = masks.iter().collect();
    order.sort_by_key(|m| m.instance_id());
    if let Some(w) = order.windows(2).find(|w| w[0].instance_id() == w[1].instance_id()) {
        return Err(DensifyError::DuplicateInstance(w[0].instance_id()));
    }
    let projected = project_points(frame)?;
    let dims = (frame.image_width(), frame.image_height());

    let mut generated = Vec::new();
    let mut reports = Vec::with_capacity(order.len());
    for mask in order {
        let id = mask.instance_id();
        let associated = match associate_masks(&projected, std::slice::from_ref(mask), dims) {
            Ok(mut v) => v.remove(0).points,
            Err(e) => {
                reports.push(InstanceReport::empty(id, InstanceStatus::Failed, e.to_string()));
                continue;
            }
        };
        if associated.is_empty() {
            reports.push(InstanceReport::empty(
                id,
                InstanceStatus::Skipped,
                "no projected radar points inside the mask".into(),
            ));
            continue;
        }
        let inst = depth_mode_filter(id, &associated)?;
        let mut report = InstanceReport {
            instance_id: id,
            status: InstanceStatus::Densified,
            reason: None,
            associated_count: associated.len(),
            filtered_count: inst.points.len(),
            mode_floor: Some(inst.mode_floor),
            surface_count: 0,
            outline_count: 0,
            meta: None,
        };
        match densify_instance(&inst, mask, frame, cfg, child_seed(cfg.rng_seed, id as u64)) {
            Ok(out) => {
                report.surface_count = out.surface2d.len();
                report.outline_count = out.outline2d.len();
                report.meta = Some(out.meta);
                generated.extend(out.generated);
            }
            Err(e) => {
                report.status = InstanceStatus::Failed;
                report.reason = Some(e.to_string());
            }
        }
        reports.push(report);
    }

    let generated_points = generated.len();
    let out = frame.with_appended(generated)?;
    let report = FrameReport {
        seed: cfg.rng_seed,
        input_points: frame.points().len(),
        generated_points,
        output_points: out.points().len(),
        instances: reports,
    };
    Ok((out, report))
}
