// SPDX-License-Identifier: Apache-2.0

//! Ground abandonment sampling (branch Pv3).
//!
//! The xy-plane over `[x_s, x_l] x [y_s, y_l]` is gridded into `x_t x y_t`
//! cells. Within each cell a point survives only if it sits strictly more than
//! `tau_h` above the cell's lowest point. The filter is deterministic.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud};
use crate::des::INTEGER_RATIO_TOL;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasConfig {
    pub x_s: f64,
    pub x_l: f64,
    pub y_s: f64,
    pub y_l: f64,
    /// Cell size along x (m).
    pub x_t: f64,
    /// Cell size along y (m).
    pub y_t: f64,
    /// Height-difference threshold (m).
    pub tau_h: f64,
    /// Keep points outside the grid coverage untouched.
    #[serde(default = "default_true")]
    pub passthrough_outside: bool,
}

impl GasConfig {
    pub fn kitti() -> Self {
        Self {
            x_s: 0.0,
            x_l: 40.0,
            y_s: -35.0,
            y_l: 35.0,
            x_t: 5.0,
            y_t: 10.0,
            tau_h: 0.2,
            passthrough_outside: true,
        }
    }

    pub fn wod() -> Self {
        Self {
            x_s: -45.0,
            x_l: 45.0,
            y_s: -45.0,
            y_l: 45.0,
            x_t: 10.0,
            y_t: 10.0,
            tau_h: 0.5,
            passthrough_outside: true,
        }
    }

    /// Cells along x and y.
    pub fn grid_dims(&self) -> (usize, usize) {
        (
            ((self.x_l - self.x_s) / self.x_t).round() as usize,
            ((self.y_l - self.y_s) / self.y_t).round() as usize,
        )
    }

    /// Cell `(ix, iy)` holding `p`, or `None` outside the coverage. The upper
    /// boundary belongs to the last cell.
    pub fn cell_of(&self, p: &Point) -> Option<(usize, usize)> {
        let (x, y) = (p.x as f64, p.y as f64);
        if !(self.x_s <= x && x <= self.x_l && self.y_s <= y && y <= self.y_l) {
            return None;
        }
        let (nx, ny) = self.grid_dims();
        let ix = (((x - self.x_s) / self.x_t).floor() as usize).min(nx - 1);
        let iy = (((y - self.y_s) / self.y_t).floor() as usize).min(ny - 1);
        Some((ix, iy))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let all = [
            self.x_s, self.x_l, self.y_s, self.y_l, self.x_t, self.y_t, self.tau_h,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            v.push("gas: all parameters must be finite".to_string());
            return v;
        }
        for (axis, lo, hi, step) in [
            ("x", self.x_s, self.x_l, self.x_t),
            ("y", self.y_s, self.y_l, self.y_t),
        ] {
            if lo >= hi {
                v.push(format!("gas: {axis}_s < {axis}_l required (got {lo}, {hi})"));
            }
            if step <= 0.0 {
                v.push(format!("gas.{axis}_t must be > 0 (got {step})"));
            } else if lo < hi {
                let ratio = (hi - lo) / step;
                if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > INTEGER_RATIO_TOL {
                    v.push(format!(
                        "gas: grid count n_g{axis} = ({axis}_l - {axis}_s) / {axis}_t must be a positive integer (got {ratio})"
                    ));
                }
            }
        }
        if self.tau_h <= 0.0 {
            v.push(format!("gas.tau_h must be > 0 (got {})", self.tau_h));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAssignment {
    pub nx: usize,
    pub ny: usize,
    /// Linear cell index `ix * ny + iy` per point; `None` outside coverage.
    pub cells: Vec<Option<usize>>,
    /// Lowest z per cell; `None` for empty cells.
    pub h_min: Vec<Option<f32>>,
}

impl GridAssignment {
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.ny, cell % self.ny)
    }
}

pub fn partition_grid(cloud: &PointCloud, cfg: &GasConfig) -> GridAssignment {
    let (nx, ny) = cfg.grid_dims();
    let mut h_min: Vec<Option<f32>> = vec![None; nx * ny];
    let cells: Vec<Option<usize>> = cloud
        .iter()
        .map(|p| {
            cfg.cell_of(p).map(|(ix, iy)| {
                let c = ix * ny + iy;
                h_min[c] = Some(h_min[c].map_or(p.z, |h| h.min(p.z)));
                c
            })
        })
        .collect();
    GridAssignment {
        nx,
        ny,
        cells,
        h_min,
    }
}

/// Per-point keep mask of the filter.
pub fn gas_mask(cloud: &PointCloud, cfg: &GasConfig) -> Vec<bool> {
    let grid = partition_grid(cloud, cfg);
    cloud
        .iter()
        .zip(&grid.cells)
        .map(|(p, cell)| match cell {
            Some(c) => {
                let floor = grid.h_min[*c].expect("occupied cell has a minimum") as f64;
                p.z as f64 > floor + cfg.tau_h
            }
            None => cfg.passthrough_outside,
        })
        .collect()
}

/// Drops near-ground points; order preserved.
pub fn gas_filter(cloud: &PointCloud, cfg: &GasConfig) -> PointCloud {
    let mask = gas_mask(cloud, cfg);
    cloud.derive(
        cloud
            .iter()
            .zip(mask)
            .filter_map(|(p, keep)| keep.then_some(*p))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitti_grid_dims_and_clamp() {
        let cfg = GasConfig::kitti();
        assert_eq!(cfg.grid_dims(), (8, 7));
        assert_eq!(cfg.cell_of(&Point::new(40.0, 35.0, 0.0, 0.0)), Some((7, 6)));
        assert_eq!(cfg.cell_of(&Point::new(0.0, -35.0, 0.0, 0.0)), Some((0, 0)));
        assert_eq!(cfg.cell_of(&Point::new(40.5, 0.0, 0.0, 0.0)), None);
        assert_eq!(GasConfig::wod().grid_dims(), (9, 9));
    }

    #[test]
    fn strict_height_threshold() {
        let cfg = GasConfig::kitti();
        let pts: Vec<Point> = [-1.7f32, -1.6, -1.45, 0.2]
            .iter()
            .map(|&z| Point::new(1.0, 1.0, z, 0.0))
            .collect();
        let out = gas_filter(&PointCloud::new(pts), &cfg);
        let zs: Vec<f32> = out.iter().map(|p| p.z).collect();
        assert_eq!(zs, vec![-1.45, 0.2]);
    }

    #[test]
    fn single_point_cell_is_removed() {
        let cfg = GasConfig::kitti();
        let c = PointCloud::new(vec![Point::new(3.0, 3.0, 1.0, 0.0)]);
        assert!(gas_filter(&c, &cfg).is_empty());
    }

    #[test]
    fn outside_points_follow_passthrough_flag() {
        let mut cfg = GasConfig::kitti();
        let c = PointCloud::new(vec![Point::new(60.0, 0.0, -1.7, 0.0)]);
        assert_eq!(gas_filter(&c, &cfg).len(), 1);
        cfg.passthrough_outside = false;
        assert_eq!(gas_filter(&c, &cfg).len(), 0);
    }

    #[test]
    fn validation() {
        assert!(GasConfig::kitti().violations().is_empty());
        assert!(GasConfig::wod().violations().is_empty());
        let bad = GasConfig {
            x_t: 3.0,
            tau_h: 0.0,
            ..GasConfig::kitti()
        };
        let v = bad.violations();
        assert_eq!(v.len(), 2, "{v:?}");
    }
}
