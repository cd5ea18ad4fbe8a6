// SPDX-License-Identifier: Apache-2.0

//! Flat-buffer entry points for in-process host bindings.
//!
//! Points are row-major `N x 4` f32 buffers, boxes `N x 7`, logits `N`.
//! Configuration is a flat mapping from dotted `PipelineConfig` field
//! names (`"des.d_t"`, `"gas.tau_h"`, `"n_p"`) to numbers, layered over a
//! preset. Nothing here touches the filesystem.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::boxes::{Box7, Proposal};
use crate::ckps::{select_keypoints, CkpsError};
use crate::cloud::{FrameError, Point, PointCloud};
use crate::config::{ConfigError, PipelineConfig, Preset};
use crate::consistency::{
    consistency_box_loss, consistency_cls_loss, consistency_total, foreground_sample_points,
    CfProposals, ConsistencyError, FocalParams,
};
use crate::des::des_sample;
use crate::gas::gas_filter;
use crate::seed::SampleSeed;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum InteropError {
    #[error("buffer of {len} values is not a multiple of row width {width}")]
    Shape { len: usize, width: usize },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Ckps(#[from] CkpsError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
}

fn check_rows(len: usize, width: usize) -> Result<usize, InteropError> {
    if !len.is_multiple_of(width) {
        return Err(InteropError::Shape { len, width });
    }
    Ok(len / width)
}

pub fn cloud_from_slice(buf: &[f32]) -> Result<PointCloud, InteropError> {
    check_rows(buf.len(), 4)?;
    let points = buf
        .chunks_exact(4)
        .map(|c| Point::new(c[0], c[1], c[2], c[3]))
        .collect();
    Ok(PointCloud::new(points))
}

pub fn cloud_to_vec(cloud: &PointCloud) -> Vec<f32> {
    cloud.iter().flat_map(|p| p.as_array()).collect()
}

pub fn boxes_from_slice(buf: &[f32]) -> Result<Vec<Box7>, InteropError> {
    check_rows(buf.len(), 7)?;
    Ok(buf
        .chunks_exact(7)
        .map(|c| {
            let mut a = [0.0f64; 7];
            for (dst, &src) in a.iter_mut().zip(c) {
                *dst = src as f64;
            }
            Box7::from_array(a)
        })
        .collect())
}

/// Builds proposals from an `N x 7` box buffer and `N` logits.
pub fn proposals_from_slices(boxes: &[f32], logits: &[f32], class_id: u32) -> Result<Vec<Proposal>, InteropError> {
    let boxes = boxes_from_slice(boxes)?;
    if boxes.len() != logits.len() {
        return Err(InteropError::Shape {
            len: logits.len(),
            width: 1,
        });
    }
    Ok(boxes
        .into_iter()
        .zip(logits)
        .map(|(b, &l)| Proposal::new(b, l as f64, class_id))
        .collect())
}

/// Resolves a flat mapping over `preset`. Integer and boolean fields accept
/// integral numbers (booleans as 0/1).
pub fn config_from_mapping(
    preset: Preset,
    mapping: &BTreeMap<String, f64>,
) -> Result<PipelineConfig, InteropError> {
    let base = PipelineConfig::preset(preset).unwrap_or_else(PipelineConfig::kitti);
    let mut value = serde_json::to_value(&base).expect("config serializes");
    // Re-derived from the (possibly overridden) crop below.
    value["ckps"]["origin"] = serde_json::Value::Null;
    for (key, &number) in mapping {
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| InteropError::UnknownKey(key.clone()))?;
        }
        *slot = match slot {
            serde_json::Value::Bool(_) => serde_json::Value::Bool(number != 0.0),
            serde_json::Value::Number(n) if !n.is_f64() && number.fract() == 0.0 && number >= 0.0 => {
                serde_json::Value::from(number as u64)
            }
            serde_json::Value::Number(_) | serde_json::Value::Null => serde_json::json!(number),
            _ => return Err(InteropError::UnknownKey(key.clone())),
        };
    }
    let cfg: PipelineConfig =
        serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok(cfg.resolved().validate()?)
}

pub fn des_sample_flat(
    points: &[f32],
    mapping: &BTreeMap<String, f64>,
    preset: Preset,
    seed: u64,
) -> Result<Vec<f32>, InteropError> {
    let cfg = config_from_mapping(preset, mapping)?;
    let cloud = cloud_from_slice(points)?;
    Ok(cloud_to_vec(&des_sample(&cloud, &cfg.des, SampleSeed(seed))))
}

pub fn gas_filter_flat(
    points: &[f32],
    mapping: &BTreeMap<String, f64>,
    preset: Preset,
) -> Result<Vec<f32>, InteropError> {
    let cfg = config_from_mapping(preset, mapping)?;
    let cloud = cloud_from_slice(points)?;
    Ok(cloud_to_vec(&gas_filter(&cloud, &cfg.gas)))
}

/// Keypoint triples flattened to `K x 3` u32.
pub fn select_keypoints_flat(
    views: [&[f32]; 3],
    mapping: &BTreeMap<String, f64>,
    preset: Preset,
) -> Result<Vec<u32>, InteropError> {
    let cfg = config_from_mapping(preset, mapping)?;
    let clouds = [
        cloud_from_slice(views[0])?,
        cloud_from_slice(views[1])?,
        cloud_from_slice(views[2])?,
    ];
    let mask = select_keypoints([&clouds[0], &clouds[1], &clouds[2]], &cfg.ckps)?;
    Ok(mask.triples.iter().flatten().copied().collect())
}

/// Foreground-restricted proposals as `(boxes, logits)` per view.
#[allow(clippy::type_complexity)]
pub fn foreground_sample_points_flat(
    views: [&[f32]; 3],
    boxes: [&[f32]; 3],
    logits: [&[f32]; 3],
    gt: &[f32],
    mapping: &BTreeMap<String, f64>,
    preset: Preset,
) -> Result<[(Vec<f32>, Vec<f32>); 3], InteropError> {
    let cfg = config_from_mapping(preset, mapping)?;
    let clouds = [
        cloud_from_slice(views[0])?,
        cloud_from_slice(views[1])?,
        cloud_from_slice(views[2])?,
    ];
    let props = [
        proposals_from_slices(boxes[0], logits[0], 1)?,
        proposals_from_slices(boxes[1], logits[1], 1)?,
        proposals_from_slices(boxes[2], logits[2], 1)?,
    ];
    let refs = [&clouds[0], &clouds[1], &clouds[2]];
    let mask = select_keypoints(refs, &cfg.ckps)?;
    let gt = boxes_from_slice(gt)?;
    let cf = foreground_sample_points(refs, [&props[0], &props[1], &props[2]], &gt, &mask)?;
    Ok(cf.views.map(|v| {
        let b = v
            .iter()
            .flat_map(|p| p.bbox.as_array().map(|x| x as f32))
            .collect();
        let l = v.iter().map(|p| p.logit as f32).collect();
        (b, l)
    }))
}

/// `(l_box_c, l_cls_c, l_cons)` for aligned foreground proposals.
pub fn consistency_losses_flat(
    boxes: [&[f32]; 3],
    logits: [&[f32]; 3],
    n_mv: usize,
) -> Result<(f64, f64, f64), InteropError> {
    let views = [
        proposals_from_slices(boxes[0], logits[0], 1)?,
        proposals_from_slices(boxes[1], logits[1], 1)?,
        proposals_from_slices(boxes[2], logits[2], 1)?,
    ];
    if views[1].len() != views[0].len() || views[2].len() != views[0].len() {
        return Err(ConsistencyError::LengthMismatch {
            view: 1,
            proposals: views[1].len().max(views[2].len()),
            points: views[0].len(),
        }
        .into());
    }
    let cf = CfProposals::from_views(views);
    let l_box = consistency_box_loss(&cf);
    let l_cls = consistency_cls_loss(&cf, &FocalParams::default());
    let (_, l_cons) = consistency_total(l_cls, l_box, n_mv)?;
    Ok((l_box, l_cls, l_cons))
}
