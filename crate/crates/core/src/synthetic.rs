//! Seeded synthetic scenes: box-shaped objects in front of a pinhole camera,
//! each with a rectangular instance mask, a cluster of radar returns on its
//! front face, and scattered background returns.

use nalgebra::{Matrix3, Matrix4};
use rand::Rng;

use crate::geometry::Projector;
use crate::rng::seeded_rng;
use crate::types::{CalibratedFrame, Calibration, InstanceMask, RadarPoint};

pub const IMAGE_WIDTH: u32 = 640;
pub const IMAGE_HEIGHT: u32 = 480;

/// Attribute fields carried by synthetic points, after x, y, z.
pub const ATTRIBUTES: [&str; 4] = ["rcs", "v_r", "v_r_comp", "time"];

/// Front faces: (forward distance, lateral offset, width, height) in meters.
const OBJECTS: [(f64, f64, f64, f64); 8] = [
    (8.4, -4.0, 1.8, 1.5),
    (12.3, 5.9, 2.0, 1.6),
    (16.6, -0.3, 1.9, 1.7),
    (21.2, 5.9, 2.2, 1.8),
    (27.5, -7.2, 2.4, 2.0),
    (33.4, 4.7, 2.0, 1.6),
    (38.7, -6.2, 2.2, 1.8),
    (44.2, 3.1, 2.0, 2.0),
];

const PRIORS_PER_OBJECT: usize = 8;
const MOUNT_HEIGHT: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    pub instance_id: u32,
    /// Center of the front face in radar coordinates.
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub frame: CalibratedFrame,
    pub masks: Vec<InstanceMask>,
    pub objects: Vec<SyntheticObject>,
}

/// Pinhole camera, focal 500 px, principal point at the image center. Radar
/// axes are x forward, y left, z up; camera axes x right, y down, z forward.
pub fn calibration() -> Calibration {
    let k = Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0);
    let e = Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0, MOUNT_HEIGHT, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    Calibration::new(IMAGE_WIDTH, IMAGE_HEIGHT, k, e).expect("fixed calibration is valid")
}

/// A scene with `instances` objects (at most 8) and `total_points` radar
/// returns in all. Every object gets a cluster of returns within one meter
/// of depth plus one return from far behind it that still projects into its
/// mask; the remaining returns are background that misses every mask.
pub fn scene(seed: u64, instances: usize, total_points: usize) -> SyntheticScene {
    assert!(instances <= OBJECTS.len(), "at most {} synthetic objects", OBJECTS.len());
    assert!(
        total_points >= instances * (PRIORS_PER_OBJECT + 1),
        "not enough points for the requested objects"
    );
    let calib = calibration();
    let proj = Projector::new(&calib).expect("fixed calibration is invertible");
    let mut rng = seeded_rng(seed);
    let attrs = |rng: &mut crate::rng::SimRng| {
        vec![
            rng.random_range(-10.0..20.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.0..0.1),
        ]
    };

    let mut objects = Vec::with_capacity(instances);
    let mut masks = Vec::with_capacity(instances);
    let mut points = Vec::with_capacity(total_points);
    for (k, &(dist, lateral, width, height)) in OBJECTS.iter().take(instances).enumerate() {
        let id = k as u32 + 1;
        let center = [dist, lateral, MOUNT_HEIGHT - 0.5 + height / 2.0];
        let corner = |dy: f64, dz: f64| proj.to_image([dist, lateral + dy, center[2] + dz]);
        let a = corner(width / 2.0, height / 2.0);
        let b = corner(-width / 2.0, -height / 2.0);
        let col0 = a[0].min(b[0]).floor().max(0.0) as u32;
        let col1 = (a[0].max(b[0]).ceil() as u32).min(IMAGE_WIDTH - 1);
        let row0 = a[1].min(b[1]).floor().max(0.0) as u32;
        let row1 = (a[1].max(b[1]).ceil() as u32).min(IMAGE_HEIGHT - 1);
        masks.push(InstanceMask::rectangle(id, IMAGE_WIDTH, IMAGE_HEIGHT, (col0, row0), (col1, row1)).expect("mask inside image"));

        let base = dist.floor();
        for _ in 0..PRIORS_PER_OBJECT {
            let x = base + rng.random_range(0.05..0.95);
            let y = lateral + rng.random_range(-0.4..0.4) * width;
            let z = center[2] + rng.random_range(-0.4..0.4) * height;
            points.push(RadarPoint::new(x, y, z, attrs(&mut rng)));
        }
        // a return from well behind the object that lands on its mask
        let far = dist + 9.0;
        let s = far / dist;
        points.push(RadarPoint::new(far, lateral * s, center[2] * s, attrs(&mut rng)));
        objects.push(SyntheticObject {
            instance_id: id,
            center,
            width,
            height,
        });
    }

    while points.len() < total_points {
        let p = [rng.random_range(3.0..50.0), rng.random_range(-20.0..20.0), rng.random_range(-2.0..3.0)];
        let [u, v, d] = proj.to_image(p);
        if d > 0.0 && masks.iter().any(|m| m.contains(u, v)) {
            continue;
        }
        points.push(RadarPoint::new(p[0], p[1], p[2], attrs(&mut rng)));
    }

    let schema = ATTRIBUTES.iter().map(|s| s.to_string()).collect();
    SyntheticScene {
        frame: CalibratedFrame::new(calib, schema, points).expect("synthetic points are valid"),
        masks,
        objects,
    }
}

/// The standard fixture: five objects, 1000 returns, seed 42.
pub fn fixture() -> SyntheticScene {
    scene(42, 5, 1000)
}
