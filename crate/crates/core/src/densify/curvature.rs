use super::DensifyError;

/// Legs shorter than this make the vertex angle undefined.
const MIN_LEG: f64 = 1e-12;

/// Below this `|sin theta|` a triple counts as collinear.
const COLLINEAR_SIN: f64 = 1e-12;

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// `|sin theta|` at the middle vertex of a triple.
///
/// Equal to `sqrt(1 - cos^2 theta)` with `cos theta` from the law of cosines;
/// evaluated as `|cross| / (|a| |b|)`, which keeps nearly straight triples
/// from losing all precision to cancellation around `cos theta = -1`.
fn vertex_sine(prev: [f64; 2], cur: [f64; 2], next: [f64; 2]) -> Result<f64, DensifyError> {
    let a = sub(prev, cur);
    let b = sub(next, cur);
    let (la, lb) = (norm(a), norm(b));
    if la <= MIN_LEG || lb <= MIN_LEG {
        return Err(DensifyError::ZeroSegment { length: la.min(lb) });
    }
    let sin = ((a[0] * b[1] - a[1] * b[0]) / (la * lb)).abs().min(1.0);
    Ok(if sin < COLLINEAR_SIN { 0.0 } else { sin })
}

/// Curvature `omega = sin(theta) / ds` of the circle through a point triple,
/// where `theta` is the angle at the middle point and `ds` the arc step.
///
/// With `ds` equal to half the distance between the outer points this is the
/// exact reciprocal circumradius.
pub fn segment_curvature(prev: [f64; 2], cur: [f64; 2], next: [f64; 2], ds: f64) -> Result<f64, DensifyError> {
    if !(ds > MIN_LEG) {
        return Err(DensifyError::ZeroSegment { length: ds });
    }
    Ok(vertex_sine(prev, cur, next)? / ds)
}

/// Discrete curvature of a referring-point path: the sum of `sin(theta)` over
/// interior vertices. Endpoints have no three-point stencil and contribute
/// nothing.
pub fn path_curvature(points: &[[f64; 2]]) -> Result<f64, DensifyError> {
    if points.len() < 3 {
        return Err(DensifyError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    points.windows(3).map(|w| vertex_sine(w[0], w[1], w[2])).sum()
}

/// Outline point `(p_r + omega * p_prev) / (1 + omega)`, a point on the
/// segment `[p_prev, p_r]` pulled toward `p_prev` as `omega` grows.
pub fn interpolate_outline(p_r: [f64; 2], p_prev: [f64; 2], omega: f64) -> [f64; 2] {
    debug_assert!(omega >= 0.0);
    let s = 1.0 + omega;
    [(p_r[0] + omega * p_prev[0]) / s, (p_r[1] + omega * p_prev[1]) / s]
}
