// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::boxes::{bev_iou, Proposal};

/// Greedy rotated-BEV NMS. Candidates are visited by descending sigmoid
/// score (ties by input position); a candidate is dropped when its IoU with
/// an already kept box exceeds `iou_threshold`. Returns kept input indices
/// in visiting order, at most `max_keep` of them.
pub fn nms(proposals: &[Proposal], iou_threshold: f64, max_keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .score()
            .total_cmp(&proposals[a].score())
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() >= max_keep {
            break;
        }
        let cand = &proposals[i].bbox;
        if kept
            .iter()
            .all(|&k| bev_iou(&proposals[k].bbox, cand) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub car_class_id: u32,
    pub car_threshold: f64,
    pub other_threshold: f64,
    pub max_keep: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            car_class_id: 1,
            car_threshold: 0.7,
            other_threshold: 0.5,
            max_keep: 100,
        }
    }
}

impl NmsConfig {
    pub fn threshold_for(&self, class_id: u32) -> f64 {
        if class_id == self.car_class_id {
            self.car_threshold
        } else {
            self.other_threshold
        }
    }
}

/// Class-wise NMS with per-class thresholds; survivors of all classes are
/// merged by score and capped at `max_keep`.
pub fn nms_by_class(proposals: &[Proposal], cfg: &NmsConfig) -> Vec<usize> {
    let mut classes: Vec<u32> = proposals.iter().map(|p| p.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut kept = Vec::new();
    for class in classes {
        let members: Vec<usize> = (0..proposals.len())
            .filter(|&i| proposals[i].class_id == class)
            .collect();
        let subset: Vec<Proposal> = members.iter().map(|&i| proposals[i]).collect();
        kept.extend(
            nms(&subset, cfg.threshold_for(class), cfg.max_keep)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    kept.sort_by(|&a, &b| {
        proposals[b]
            .score()
            .total_cmp(&proposals[a].score())
            .then(a.cmp(&b))
    });
    kept.truncate(cfg.max_keep);
    kept
}
