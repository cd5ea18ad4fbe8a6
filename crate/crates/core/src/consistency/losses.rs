// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{CfProposals, ConsistencyError};

/// Quadratic-to-linear transition of the Smooth-L1 loss.
pub const SMOOTH_L1_BETA: f64 = 1.0;

pub fn smooth_l1(delta: f64) -> f64 {
    let a = delta.abs();
    if a < SMOOTH_L1_BETA {
        0.5 * a * a / SMOOTH_L1_BETA
    } else {
        a - 0.5 * SMOOTH_L1_BETA
    }
}

pub fn smooth_l1_grad(delta: f64) -> f64 {
    if delta.abs() < SMOOTH_L1_BETA {
        delta / SMOOTH_L1_BETA
    } else {
        delta.signum()
    }
}

/// Focal penalty on a score discrepancy `delta` in `[0, 1]`, read as the
/// probability of disagreement with target 0:
/// `alpha * delta^gamma * -ln(1 - min(delta, 1 - eps))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
    pub eps: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            eps: 1e-6,
        }
    }
}

pub fn focal(delta: f64, p: &FocalParams) -> f64 {
    let clamped = delta.min(1.0 - p.eps);
    p.alpha * delta.powf(p.gamma) * -(1.0 - clamped).ln()
}

pub fn focal_grad(delta: f64, p: &FocalParams) -> f64 {
    let lead = p.gamma * delta.powf(p.gamma - 1.0);
    if delta < 1.0 - p.eps {
        p.alpha * (lead * -(1.0 - delta).ln() + delta.powf(p.gamma) / (1.0 - delta))
    } else {
        p.alpha * lead * -p.eps.ln()
    }
}

/// Mean over CF entries of the Smooth-L1 discrepancy of views 2 and 3 from
/// view 1, averaged over the seven box components and summed over the two
/// views. Zero when there are no entries.
pub fn consistency_box_loss(cf: &CfProposals) -> f64 {
    let n = cf.len();
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for j in 0..n {
        let reference = cf.views[0][j].bbox.as_array();
        for view in &cf.views[1..] {
            let other = view[j].bbox.as_array();
            let per_box: f64 = other
                .iter()
                .zip(&reference)
                .map(|(b, r)| smooth_l1((b - r).abs()))
                .sum();
            sum += per_box / 7.0;
        }
    }
    sum / n as f64
}

/// Mean over CF entries of the focal penalty on sigmoid-score differences to
/// view 1, summed over views 2 and 3.
pub fn consistency_cls_loss(cf: &CfProposals, params: &FocalParams) -> f64 {
    let n = cf.len();
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for j in 0..n {
        let reference = cf.views[0][j].score();
        for view in &cf.views[1..] {
            sum += focal((view[j].score() - reference).abs(), params);
        }
    }
    sum / n as f64
}

/// Returns `(gamma, l_cons)` with `gamma = 1 / (n_mv - 1)`.
pub fn consistency_total(
    l_cls_c: f64,
    l_box_c: f64,
    n_mv: usize,
) -> Result<(f64, f64), ConsistencyError> {
    if n_mv < 2 {
        return Err(ConsistencyError::DegenerateViews(n_mv));
    }
    let gamma = 1.0 / (n_mv - 1) as f64;
    Ok((gamma, gamma * (l_cls_c + l_box_c)))
}

/// Externally computed first- and second-stage detection losses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageOneLosses {
    pub cls: f64,
    #[serde(rename = "box")]
    pub box_: f64,
    pub dir: f64,
    pub rcnn: f64,
}

/// `l_cons + (1/n_mv) * (l1*cls + l2*box + l3*dir) + rcnn`.
pub fn total_loss(
    l_cons: f64,
    stage: &StageOneLosses,
    lambdas: [f64; 3],
    n_mv: usize,
) -> Result<f64, ConsistencyError> {
    if n_mv == 0 {
        return Err(ConsistencyError::DegenerateViews(0));
    }
    let gamma_mv = 1.0 / n_mv as f64;
    let detection = lambdas[0] * stage.cls + lambdas[1] * stage.box_ + lambdas[2] * stage.dir;
    Ok(l_cons + gamma_mv * detection + stage.rcnn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub n_fg: usize,
    pub l_box_c: f64,
    pub l_cls_c: f64,
    pub gamma_mv_c: f64,
    pub l_cons: f64,
    pub gamma_mv: f64,
    pub total: f64,
}

pub fn loss_breakdown(
    cf: &CfProposals,
    n_mv: usize,
    stage: &StageOneLosses,
    lambdas: [f64; 3],
    focal_params: &FocalParams,
) -> Result<LossBreakdown, ConsistencyError> {
    let l_box_c = consistency_box_loss(cf);
    let l_cls_c = consistency_cls_loss(cf, focal_params);
    let (gamma_mv_c, l_cons) = consistency_total(l_cls_c, l_box_c, n_mv)?;
    let total = total_loss(l_cons, stage, lambdas, n_mv)?;
    Ok(LossBreakdown {
        n_fg: cf.len(),
        l_box_c,
        l_cls_c,
        gamma_mv_c,
        l_cons,
        gamma_mv: 1.0 / n_mv as f64,
        total,
    })
}
