use super::DensityGrid;
use crate::config::PillarConfig;
use crate::types::RadarPoint;

/// Per-pillar point counts over the BEV grid, row-major with rows along y and
/// columns along x.
///
/// `uncapped` is the raw binning of all in-range points. `capped` applies the
/// per-pillar point cap and keeps at most `max_pillars` nonempty pillars,
/// evicting the lowest-count pillars first (higher linear index loses ties).
#[derive(Debug, Clone, PartialEq)]
pub struct PillarHistogram {
    pub config: PillarConfig,
    pub nx: usize,
    pub ny: usize,
    pub uncapped: Vec<u32>,
    pub capped: Vec<u32>,
    pub in_range: usize,
    pub evicted_pillars: usize,
}

impl PillarHistogram {
    pub fn index_of(&self, [x, y, z]: [f64; 3]) -> Option<(usize, usize)> {
        pillar_index(&self.config, self.nx, self.ny, [x, y, z])
    }

    pub fn uncapped_at(&self, ix: usize, iy: usize) -> u32 {
        self.uncapped[iy * self.nx + ix]
    }

    pub fn capped_at(&self, ix: usize, iy: usize) -> u32 {
        self.capped[iy * self.nx + ix]
    }

    pub fn nonempty_pillars(&self) -> usize {
        self.capped.iter().filter(|&&c| c > 0).count()
    }

    /// Grid view for CSV export.
    pub fn to_grid(&self, capped: bool) -> DensityGrid {
        let counts = if capped { &self.capped } else { &self.uncapped };
        DensityGrid::new(
            [self.config.x_range[0], self.config.y_range[0]],
            [self.config.pillar_size[0], self.config.pillar_size[1]],
            self.ny,
            self.nx,
            counts.iter().map(|&c| c as f64).collect(),
        )
    }
}

fn axis_index(value: f64, [lo, hi]: [f64; 2], size: f64, n: usize) -> Option<usize> {
    if !(value >= lo && value <= hi) {
        return None;
    }
    Some((((value - lo) / size).floor() as usize).min(n - 1))
}

fn pillar_index(cfg: &PillarConfig, nx: usize, ny: usize, [x, y, z]: [f64; 3]) -> Option<(usize, usize)> {
    if !(z >= cfg.z_range[0] && z <= cfg.z_range[1]) {
        return None;
    }
    Some((
        axis_index(x, cfg.x_range, cfg.pillar_size[0], nx)?,
        axis_index(y, cfg.y_range, cfg.pillar_size[1], ny)?,
    ))
}

/// Bins radar points into BEV pillars. Points outside any range are skipped;
/// ranges are closed and the last pillar on each axis takes the far border.
pub fn pillarize(points: &[RadarPoint], config: &PillarConfig) -> PillarHistogram {
    let positions: Vec<[f64; 3]> = points.iter().map(RadarPoint::position).collect();
    pillarize_positions(&positions, config)
}

pub fn pillarize_positions(points: &[[f64; 3]], config: &PillarConfig) -> PillarHistogram {
    let (nx, ny) = config.grid_dims();
    let mut uncapped = vec![0u32; nx * ny];
    let mut in_range = 0;
    for &p in points {
        if let Some((ix, iy)) = pillar_index(config, nx, ny, p) {
            uncapped[iy * nx + ix] += 1;
            in_range += 1;
        }
    }
    let cap = u32::try_from(config.max_points_per_pillar).unwrap_or(u32::MAX);
    let mut capped: Vec<u32> = uncapped.iter().map(|&c| c.min(cap)).collect();
    let mut occupied: Vec<usize> = (0..capped.len()).filter(|&i| uncapped[i] > 0).collect();
    let mut evicted_pillars = 0;
    if occupied.len() > config.max_pillars {
        occupied.sort_by(|&a, &b| uncapped[b].cmp(&uncapped[a]).then(a.cmp(&b)));
        for &i in &occupied[config.max_pillars..] {
            capped[i] = 0;
            evicted_pillars += 1;
        }
    }
    PillarHistogram {
        config: config.clone(),
        nx,
        ny,
        uncapped,
        capped,
        in_range,
        evicted_pillars,
    }
}
