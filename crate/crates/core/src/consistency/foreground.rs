// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::ConsistencyError;
use crate::boxes::{point_in_box, Box7, Proposal};
use crate::ckps::KeypointMask;
use crate::cloud::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForegroundMode {
    #[default]
    PointBased,
    BevBased,
}

/// Which source entries survived foreground sampling, per view.
///
/// Point mode: point indices into each view's cloud. BEV mode: cell indices,
/// identical across views.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForegroundMask {
    pub mode: ForegroundMode,
    pub indices: [Vec<usize>; 3],
}

impl ForegroundMask {
    pub fn n_fg(&self) -> usize {
        self.indices[0].len()
    }
}

/// Aligned consistent-foreground proposals: entry `j` of every view refers
/// to the same keypoint or BEV cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CfProposals {
    pub views: [Vec<Proposal>; 3],
    pub mask: ForegroundMask,
}

impl CfProposals {
    /// Wraps already aligned lists. Panics if lengths differ.
    pub fn from_views(views: [Vec<Proposal>; 3]) -> Self {
        let n = views[0].len();
        assert!(views.iter().all(|v| v.len() == n), "CF views must be aligned");
        Self {
            views,
            mask: ForegroundMask {
                mode: ForegroundMode::PointBased,
                indices: std::array::from_fn(|_| (0..n).collect()),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.views[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Point-based foreground sampling: restrict each view's per-point proposals
/// to the keypoint mask, then keep keypoints whose view-1 point lies inside
/// some ground-truth box.
pub fn foreground_sample_points(
    clouds: [&PointCloud; 3],
    proposals: [&[Proposal]; 3],
    gt: &[Box7],
    mask: &KeypointMask,
) -> Result<CfProposals, ConsistencyError> {
    for view in 0..3 {
        if proposals[view].len() != clouds[view].len() {
            return Err(ConsistencyError::LengthMismatch {
                view,
                proposals: proposals[view].len(),
                points: clouds[view].len(),
            });
        }
    }
    let mut out = CfProposals::default();
    for triple in &mask.triples {
        for (view, &idx) in triple.iter().enumerate() {
            let len = clouds[view].len();
            if idx as usize >= len {
                return Err(ConsistencyError::MaskOutOfRange {
                    view,
                    index: idx as usize,
                    len,
                });
            }
        }
        let anchor = &clouds[0].points[triple[0] as usize];
        if !gt.iter().any(|b| point_in_box(anchor, b)) {
            continue;
        }
        for view in 0..3 {
            let idx = triple[view] as usize;
            out.views[view].push(proposals[view][idx]);
            out.mask.indices[view].push(idx);
        }
    }
    Ok(out)
}

/// Geometry of a BEV proposal grid. Cell `(ix, iy)` is stored at
/// `iy * nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub x_min: f64,
    pub y_min: f64,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl BevGrid {
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let (ix, iy) = (cell % self.nx, cell / self.nx);
        (
            self.x_min + (ix as f64 + 0.5) * self.cell_size,
            self.y_min + (iy as f64 + 0.5) * self.cell_size,
        )
    }
}

/// One view's dense per-cell proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct BevProposals {
    pub grid: BevGrid,
    pub cells: Vec<Proposal>,
}

/// BEV foreground sampling: keep cells whose center falls inside a
/// ground-truth footprint.
pub fn foreground_sample_bev(
    views: [&BevProposals; 3],
    gt: &[Box7],
) -> Result<CfProposals, ConsistencyError> {
    let grid = views[0].grid;
    if views
        .iter()
        .any(|v| v.grid != grid || v.cells.len() != grid.cells())
    {
        return Err(ConsistencyError::GridMismatch);
    }
    let mut out = CfProposals {
        mask: ForegroundMask {
            mode: ForegroundMode::BevBased,
            ..Default::default()
        },
        ..Default::default()
    };
    for cell in 0..grid.cells() {
        let (x, y) = grid.cell_center(cell);
        if !gt.iter().any(|b| b.contains_xy(x, y)) {
            continue;
        }
        for (view, source) in views.iter().enumerate() {
            out.views[view].push(source.cells[cell]);
            out.mask.indices[view].push(cell);
        }
    }
    Ok(out)
}
