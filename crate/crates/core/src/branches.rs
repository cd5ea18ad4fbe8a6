// SPDX-License-Identifier: Apache-2.0

//! The three sampling branches of one frame and their keypoint mask.
//!
//! Every branch starts from the range-cropped frame:
//! Pv1 = random fixed-count sample, Pv2 = DES then fixed count,
//! Pv3 = GAS then fixed count.

use crate::ckps::{select_keypoints, CkpsError, KeypointMask};
use crate::cloud::{crop, random_fixed_count, FrameError, PointCloud};
use crate::config::{PipelineConfig, Stage};
use crate::des::{des_sample, finalize_branch};
use crate::gas::gas_filter;
use crate::seed::SampleSeed;

#[derive(Debug, Clone, Default)]
pub struct MultiViewSet {
    /// Cropped input.
    pub cropped: PointCloud,
    pub pv1: Option<PointCloud>,
    pub pv2: Option<PointCloud>,
    pub pv3: Option<PointCloud>,
    pub mask: Option<KeypointMask>,
}

impl MultiViewSet {
    pub fn views(&self) -> Option<[&PointCloud; 3]> {
        Some([self.pv1.as_ref()?, self.pv2.as_ref()?, self.pv3.as_ref()?])
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BranchError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Ckps(#[from] CkpsError),
}

/// Seed for one frame; independent of processing order.
pub fn frame_seed(seed: SampleSeed, frame_id: &str) -> SampleSeed {
    seed.split(&format!("frame:{frame_id}"))
}

/// Runs the enabled stages on a raw frame. `seed` should already be the
/// frame's seed (see [`frame_seed`]).
pub fn sample_branches(
    raw: &PointCloud,
    cfg: &PipelineConfig,
    seed: SampleSeed,
) -> Result<MultiViewSet, BranchError> {
    let cropped = crop(raw, &cfg.crop);
    let mut set = MultiViewSet::default();
    if cfg.has_stage(Stage::Pv1) {
        set.pv1 = Some(random_fixed_count(&cropped, cfg.n_p, seed.split("pv1"))?);
    }
    if cfg.has_stage(Stage::Pv2) {
        let des = des_sample(&cropped, &cfg.des, seed.split("pv2/des"));
        set.pv2 = Some(finalize_branch(&des, cfg.n_p, seed.split("pv2/finalize"))?);
    }
    if cfg.has_stage(Stage::Pv3) {
        let gas = gas_filter(&cropped, &cfg.gas);
        set.pv3 = Some(finalize_branch(&gas, cfg.n_p, seed.split("pv3/finalize"))?);
    }
    if cfg.has_stage(Stage::Ckps) {
        if let Some(views) = set.views() {
            set.mask = Some(select_keypoints(views, &cfg.ckps)?);
        }
    }
    set.cropped = cropped;
    Ok(set)
}
