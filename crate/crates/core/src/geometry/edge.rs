use super::GeometryError;

/// Minimum gap between consecutive polyline vertices, in pixels.
const MIN_VERTEX_GAP: f64 = 1e-9;

/// An ordered pixel-space polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline2D {
    vertices: Vec<[f64; 2]>,
    closed: bool,
}

impl Polyline2D {
    pub fn new(vertices: Vec<[f64; 2]>, closed: bool) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::InvalidPolyline(format!(
                "need at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(GeometryError::InvalidPolyline("non-finite vertex".into()));
        }
        let n = vertices.len();
        let pairs = if closed { n } else { n - 1 };
        for i in 0..pairs {
            if dist(vertices[i], vertices[(i + 1) % n]) <= MIN_VERTEX_GAP {
                return Err(GeometryError::InvalidPolyline(format!(
                    "vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { vertices, closed })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Consecutive vertex pairs, including the closing pair of a closed line.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self.vertices.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Strictly convex hull in counter-clockwise order, starting from the
/// lowest-x (then lowest-y) point. Collinear boundary points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Resamples the convex hull boundary of `points` at `count` positions equally
/// spaced by arc length, counter-clockwise from the first hull vertex.
pub fn extract_edge_points(points: &[[f64; 2]], count: usize) -> Result<Polyline2D, GeometryError> {
    if count < 3 {
        return Err(GeometryError::DegenerateInput(format!("edge point count {count} < 3")));
    }
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateInput(
            "fewer than three non-collinear points".into(),
        ));
    }
    let n = hull.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for i in 0..n {
        let next = cumulative[i] + dist(hull[i], hull[(i + 1) % n]);
        cumulative.push(next);
    }
    let perimeter = cumulative[n];
    let mut out = Vec::with_capacity(count);
    let mut edge = 0;
    for k in 0..count {
        let s = perimeter * k as f64 / count as f64;
        while edge + 1 < n && s >= cumulative[edge + 1] {
            edge += 1;
        }
        let a = hull[edge];
        let b = hull[(edge + 1) % n];
        let t = (s - cumulative[edge]) / (cumulative[edge + 1] - cumulative[edge]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    Polyline2D::new(out, true).map_err(|e| GeometryError::DegenerateInput(e.to_string()))
}

/// `r` points strictly between `a` and `b` along the boundary path, equally
/// spaced by arc length.
///
/// The path is the circular arc through `a`, `b` and a control point placed
/// on the ray from `centroid` through the chord midpoint, at the mean
/// distance of `a` and `b` from the centroid. When `a`, `b` are equidistant
/// from the centroid this is the arc of the circle centered at the centroid.
/// If the three construction points are collinear the path is the chord.
pub fn boundary_path(a: [f64; 2], b: [f64; 2], centroid: [f64; 2], r: usize) -> Vec<[f64; 2]> {
    let steps = (r + 1) as f64;
    let chord = |k: usize| {
        let t = k as f64 / steps;
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    };
    let chord_points = || (1..=r).map(chord).collect::<Vec<_>>();

    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let out = [mid[0] - centroid[0], mid[1] - centroid[1]];
    let out_len = out[0].hypot(out[1]);
    if out_len <= 1e-12 {
        return chord_points();
    }
    let reach = (dist(a, centroid) + dist(b, centroid)) / 2.0;
    let control = [
        centroid[0] + reach * out[0] / out_len,
        centroid[1] + reach * out[1] / out_len,
    ];
    let c = cross(a, b, control);
    if c.abs() <= 1e-12 * dist(a, b) * dist(a, control) {
        return chord_points();
    }
    let Some((center, radius)) = circumcircle(a, b, control) else {
        return chord_points();
    };

    let angle = |p: [f64; 2]| (p[1] - center[1]).atan2(p[0] - center[0]);
    let tau = std::f64::consts::TAU;
    let start = angle(a);
    let ccw_sweep = (angle(b) - start).rem_euclid(tau);
    let control_offset = (angle(control) - start).rem_euclid(tau);
    let sweep = if control_offset < ccw_sweep { ccw_sweep } else { ccw_sweep - tau };
    (1..=r)
        .map(|k| {
            let theta = start + sweep * k as f64 / steps;
            [center[0] + radius * theta.cos(), center[1] + radius * theta.sin()]
        })
        .collect()
}

fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<([f64; 2], f64)> {
    let bx = b[0] - a[0];
    let by = b[1] - a[1];
    let cx = c[0] - a[0];
    let cy = c[1] - a[1];
    let d = 2.0 * (bx * cy - by * cx);
    if d == 0.0 {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let center = [a[0] + ux, a[1] + uy];
    let radius = ux.hypot(uy);
    radius.is_finite().then_some((center, radius))
}

/// Inserts `r` referring points on the boundary path of every segment of
/// `edge`. The polyline's vertex centroid steers the arc construction.
pub fn insert_referring_points(edge: &Polyline2D, r: usize) -> Vec<Vec<[f64; 2]>> {
    let centroid = edge.centroid();
    edge.segments().map(|(a, b)| boundary_path(a, b, centroid, r)).collect()
}
