// SPDX-License-Identifier: Apache-2.0

//! Multi-view foreground sampling, consistency losses and fusion pooling.

mod foreground;
mod losses;
mod mvfp;
mod nms;

use thiserror::Error;

pub use foreground::{
    foreground_sample_bev, foreground_sample_points, BevGrid, BevProposals, CfProposals,
    ForegroundMask, ForegroundMode,
};
pub use losses::{
    consistency_box_loss, consistency_cls_loss, consistency_total, focal, focal_grad,
    loss_breakdown, smooth_l1, smooth_l1_grad, total_loss, FocalParams, LossBreakdown,
    StageOneLosses, SMOOTH_L1_BETA,
};
pub use mvfp::{mvfp_pool, FeatureTable, MvfpConfig, MvfpOutput, RoiPool};
pub use nms::{nms, nms_by_class, NmsConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsistencyError {
    #[error("view {view}: {proposals} proposals for {points} points")]
    LengthMismatch {
        view: usize,
        proposals: usize,
        points: usize,
    },
    #[error("keypoint mask index {index} out of range for view {view} ({len} entries)")]
    MaskOutOfRange { view: usize, index: usize, len: usize },
    #[error("BEV proposal grids differ across views or do not match their geometry")]
    GridMismatch,
    #[error("at least two views are required (got {0})")]
    DegenerateViews(usize),
    #[error("feature width differs across views ({0} vs {1})")]
    FeatureDimMismatch(usize, usize),
    #[error("view {view}: {features} feature rows for {points} points")]
    AlignmentError {
        view: usize,
        features: usize,
        points: usize,
    },
}
