// SPDX-License-Identifier: Apache-2.0

//! Geometric part of multi-view fusion pooling: concatenate the three views'
//! points and features, NMS each view's proposals, concatenate survivors and
//! NMS them jointly into RoIs, then gather the points and feature rows inside
//! each RoI. Learned feature interpolation stays with the detector.

use serde::{Deserialize, Serialize};

use super::nms::{nms_by_class, NmsConfig};
use super::ConsistencyError;
use crate::boxes::{point_in_box, Proposal};
use crate::cloud::PointCloud;

/// Row-major per-point features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureTable {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * dim, "feature buffer is not rows x dim");
        Self { rows, dim, data }
    }

    /// Zero-width table, for callers that only need point membership.
    pub fn empty(rows: usize) -> Self {
        Self {
            rows,
            dim: 0,
            data: Vec::new(),
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvfpConfig {
    pub nms: NmsConfig,
    /// Added on every side of a RoI before gathering (m).
    pub roi_margin: f64,
}

impl Default for MvfpConfig {
    fn default() -> Self {
        Self {
            nms: NmsConfig::default(),
            roi_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiPool {
    pub roi: Proposal,
    /// View the surviving proposal came from.
    pub source_view: usize,
    /// Indices into the concatenated cloud, ascending.
    pub point_indices: Vec<usize>,
    /// Gathered feature rows, `point_indices.len() x dim`.
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvfpOutput {
    pub points: PointCloud,
    pub features: FeatureTable,
    /// Start of each view inside the concatenation.
    pub view_offsets: [usize; 3],
    pub rois: Vec<RoiPool>,
}

pub fn mvfp_pool(
    clouds: [&PointCloud; 3],
    features: [&FeatureTable; 3],
    proposals: [&[Proposal]; 3],
    cfg: &MvfpConfig,
) -> Result<MvfpOutput, ConsistencyError> {
    for view in 0..3 {
        if features[view].rows != clouds[view].len() {
            return Err(ConsistencyError::AlignmentError {
                view,
                features: features[view].rows,
                points: clouds[view].len(),
            });
        }
        if features[view].dim != features[0].dim {
            return Err(ConsistencyError::FeatureDimMismatch(
                features[0].dim,
                features[view].dim,
            ));
        }
    }
    let dim = features[0].dim;

    let mut view_offsets = [0usize; 3];
    let mut points = Vec::with_capacity(clouds.iter().map(|c| c.len()).sum());
    let mut data = Vec::with_capacity(features.iter().map(|f| f.data.len()).sum());
    for view in 0..3 {
        view_offsets[view] = points.len();
        points.extend_from_slice(&clouds[view].points);
        data.extend_from_slice(&features[view].data);
    }
    let rows = points.len();
    let merged = clouds[0].derive(points);
    let table = FeatureTable::new(rows, dim, data);

    let mut candidates: Vec<Proposal> = Vec::new();
    let mut origin: Vec<usize> = Vec::new();
    for (view, props) in proposals.iter().enumerate() {
        for k in nms_by_class(props, &cfg.nms) {
            candidates.push(props[k]);
            origin.push(view);
        }
    }

    let rois = nms_by_class(&candidates, &cfg.nms)
        .into_iter()
        .map(|k| {
            let roi = candidates[k];
            let region = roi.bbox.enlarged(cfg.roi_margin);
            let point_indices: Vec<usize> = merged
                .iter()
                .enumerate()
                .filter(|(_, p)| point_in_box(p, &region))
                .map(|(i, _)| i)
                .collect();
            let mut gathered = Vec::with_capacity(point_indices.len() * dim);
            for &i in &point_indices {
                gathered.extend_from_slice(table.row(i));
            }
            RoiPool {
                roi,
                source_view: origin[k],
                point_indices,
                features: gathered,
            }
        })
        .collect();

    Ok(MvfpOutput {
        points: merged,
        features: table,
        view_offsets,
        rois,
    })
}
