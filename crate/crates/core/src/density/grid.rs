use std::fmt::Write as _;

use thiserror::Error;

use super::{kernel_value, BandwidthVector};
use crate::config::Kernel;

/// A dense 2-D grid of nonnegative values.
///
/// Cell `(row, col)` covers `[origin + col * cell_x, origin + (col + 1) * cell_x)`
/// horizontally and the analogous interval vertically. Values are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    origin: [f64; 2],
    cell_size: [f64; 2],
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridCsvError {
    #[error("grid CSV line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn malformed(line: usize, message: impl Into<String>) -> GridCsvError {
    GridCsvError::Malformed {
        line,
        message: message.into(),
    }
}

const CSV_HEADER: &str = "origin_x,origin_y,cell_x,cell_y,rows,cols";

impl DensityGrid {
    /// # Panics
    /// If a dimension is zero, the value count is wrong, or a value is negative
    /// or non-finite.
    pub fn new(origin: [f64; 2], cell_size: [f64; 2], rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "density grid needs positive dimensions");
        assert_eq!(values.len(), rows * cols, "density grid value count");
        assert!(
            values.iter().all(|v| *v >= 0.0 && v.is_finite()),
            "density grid values must be finite and >= 0"
        );
        Self {
            origin,
            cell_size,
            rows,
            cols,
            values,
        }
    }

    pub fn zeros(origin: [f64; 2], cell_size: [f64; 2], rows: usize, cols: usize) -> Self {
        Self::new(origin, cell_size, rows, cols, vec![0.0; rows * cols])
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> [f64; 2] {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Center of cell `(row, col)` as `(x, y)`.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size[0],
            self.origin[1] + (row as f64 + 0.5) * self.cell_size[1],
        ]
    }

    /// `(row, col, value)` of the largest cell; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (idx, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (idx / self.cols, idx % self.cols, v)
    }

    /// Cells strictly greater than all of their up-to-8 neighbors.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.get(r, c);
                let mut is_max = true;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr >= 0 && nc >= 0 && (nr as usize) < self.rows && (nc as usize) < self.cols && self.get(nr as usize, nc as usize) >= v {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// CSV export: a header line naming origin, cell size and shape, one line
    /// with those values, then one line per grid row. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CSV_HEADER}");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            self.origin[0], self.origin[1], self.cell_size[0], self.cell_size[1], self.rows, self.cols
        );
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, GridCsvError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty input"))?;
        if header.trim() != CSV_HEADER {
            return Err(malformed(1, format!("expected header `{CSV_HEADER}`")));
        }
        let (_, meta) = lines.next().ok_or_else(|| malformed(2, "missing metadata line"))?;
        let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(malformed(2, "metadata needs 6 fields"));
        }
        let float = |i: usize| fields[i].parse::<f64>().map_err(|e| malformed(2, format!("field {i}: {e}")));
        let int = |i: usize| fields[i].parse::<usize>().map_err(|e| malformed(2, format!("field {i}: {e}")));
        let (origin, cell) = ([float(0)?, float(1)?], [float(2)?, float(3)?]);
        let (rows, cols) = (int(4)?, int(5)?);
        if rows == 0 || cols == 0 {
            return Err(malformed(2, "grid dimensions must be positive"));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| malformed(idx + 1, e.to_string()))?;
            if row.len() != cols {
                return Err(malformed(idx + 1, format!("expected {cols} values, got {}", row.len())));
            }
            if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(malformed(idx + 1, "values must be finite and >= 0"));
            }
            values.extend(row);
        }
        if values.len() != rows * cols {
            return Err(malformed(0, format!("expected {rows} rows of values")));
        }
        Ok(Self::new(origin, cell, rows, cols, values))
    }
}

/// Counts image points per square cell of `cell` pixels.
///
/// Cells are half-open; the last row and column also take points on the far
/// image border, so every point with `0 <= u <= width`, `0 <= v <= height`
/// is counted exactly once. Other points are ignored.
///
/// # Panics
/// If `cell` is zero.
pub fn grid_density_surface(points2d: &[[f64; 2]], image_dims: (u32, u32), cell: u32) -> DensityGrid {
    assert!(cell >= 1, "grid cell must be at least one pixel");
    let (w, h) = (image_dims.0 as f64, image_dims.1 as f64);
    let size = cell as f64;
    let cols = (image_dims.0.div_ceil(cell) as usize).max(1);
    let rows = (image_dims.1.div_ceil(cell) as usize).max(1);
    let mut values = vec![0.0; rows * cols];
    for &[u, v] in points2d {
        if !(u >= 0.0 && v >= 0.0 && u <= w && v <= h) {
            continue;
        }
        let col = ((u / size).floor() as usize).min(cols - 1);
        let row = ((v / size).floor() as usize).min(rows - 1);
        values[row * cols + col] += 1.0;
    }
    DensityGrid::new([0.0, 0.0], [size, size], rows, cols, values)
}

/// A regular BEV lattice; values are evaluated at cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: [f64; 2],
    pub step: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Lattice {
    /// Lattice whose cells tile `[x0, x1] x [y0, y1]` with the given step.
    pub fn covering(x_range: [f64; 2], y_range: [f64; 2], step: f64) -> Self {
        assert!(step > 0.0 && x_range[1] > x_range[0] && y_range[1] > y_range[0], "lattice extents must be positive");
        Self {
            origin: [x_range[0], y_range[0]],
            step: [step, step],
            nx: crate::config::cell_count(x_range[1] - x_range[0], step),
            ny: crate::config::cell_count(y_range[1] - y_range[0], step),
        }
    }

    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.step[0],
            self.origin[1] + (iy as f64 + 0.5) * self.step[1],
        ]
    }
}

/// KDE of 3-D points evaluated on an `(x, y)` lattice.
///
/// The vertical axis is collapsed: only the first two bandwidth components are
/// used, with prefactor `1 / (W * B_x * B_y)`. For the Gauss kernel this is the
/// exact `(x, y)` marginal of the 3-D estimate up to the normalizer.
pub fn kde_surface_3d(points3d: &[[f64; 3]], bw: &BandwidthVector, kernel: Kernel, gamma: f64, lattice: &Lattice) -> DensityGrid {
    assert!(bw.dims() >= 2, "surface needs x and y bandwidths");
    assert!(lattice.nx > 0 && lattice.ny > 0, "lattice extents must be positive");
    let (bx, by) = (bw.components()[0], bw.components()[1]);
    let norm = points3d.len() as f64 * bx * by;
    let mut values = Vec::with_capacity(lattice.nx * lattice.ny);
    for iy in 0..lattice.ny {
        for ix in 0..lattice.nx {
            let [x, y] = lattice.node(ix, iy);
            if points3d.is_empty() {
                values.push(0.0);
                continue;
            }
            let sum: f64 = points3d
                .iter()
                .map(|p| {
                    let dx = (x - p[0]) / bx;
                    let dy = (y - p[1]) / by;
                    kernel_value(kernel, (dx * dx + dy * dy).sqrt(), gamma)
                })
                .sum();
            values.push(sum / norm);
        }
    }
    DensityGrid::new(lattice.origin, lattice.step, lattice.ny, lattice.nx, values)
}
