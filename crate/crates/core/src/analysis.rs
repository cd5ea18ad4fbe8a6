// SPDX-License-Identifier: Apache-2.0

//! Sampler statistics: per-ring point shares before/after a sampler, and
//! foreground ratios over the near (high-density) and far (low-density) ring
//! groups for no sampling, random, DES and GAS.
//!
//! `R1` is an op's foreground count over the unsampled foreground count in
//! the same region; `R2` is an op's foreground count over its own total.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{point_in_box, Box7};
use crate::branches::{frame_seed, sample_branches, BranchError, MultiViewSet};
use crate::cloud::PointCloud;
use crate::config::{EmitFormat, PipelineConfig, Stage};
use crate::des::DesConfig;
use crate::seed::SampleSeed;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no frames to analyze")]
    NoFrames,
    #[error("frame {0:?} has no ground-truth labels")]
    NoGroundTruth(String),
    #[error("invalid region split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Sampling(#[from] BranchError),
}

/// Counts of points per ring (index `j - 1`); points beyond `tau_far` are
/// not counted.
pub fn ring_counts(cloud: &PointCloud, cfg: &DesConfig) -> Vec<usize> {
    let mut counts = vec![0usize; cfg.ring_count()];
    for p in cloud.iter() {
        if let Some(j) = cfg.ring_of(p.planar_distance()) {
            counts[j - 1] += 1;
        }
    }
    counts
}

/// Converts counts into percentages of their sum (all zeros for an empty sum).
pub fn percentages(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts
        .iter()
        .map(|&c| c as f64 / total as f64 * 100.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingShare {
    pub ring: usize,
    pub before: f64,
    pub after: f64,
}

pub fn region_percentages(before: &PointCloud, after: &PointCloud, cfg: &DesConfig) -> Vec<RingShare> {
    let b = percentages(&ring_counts(before, cfg));
    let a = percentages(&ring_counts(after, cfg));
    b.iter()
        .zip(&a)
        .enumerate()
        .map(|(k, (&before, &after))| RingShare {
            ring: k + 1,
            before,
            after,
        })
        .collect()
}

/// Partition of rings (1-based) into near and far groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSplit {
    pub hd_rings: Vec<usize>,
    pub ld_rings: Vec<usize>,
}

impl RegionSplit {
    /// Rings 1-3 near, the rest far.
    pub fn for_rings(n_r: usize) -> Self {
        let cut = n_r.min(3);
        Self {
            hd_rings: (1..=cut).collect(),
            ld_rings: (cut + 1..=n_r).collect(),
        }
    }

    pub fn check(&self, n_r: usize) -> Result<(), AnalysisError> {
        let mut all: Vec<usize> = self.hd_rings.iter().chain(&self.ld_rings).copied().collect();
        all.sort_unstable();
        if all != (1..=n_r).collect::<Vec<_>>() {
            return Err(AnalysisError::InvalidSplit(format!(
                "rings must be disjoint and cover 1..={n_r}"
            )));
        }
        Ok(())
    }

    pub fn region_of(&self, ring: usize) -> Option<Region> {
        if self.hd_rings.contains(&ring) {
            Some(Region::Hd)
        } else if self.ld_rings.contains(&ring) {
            Some(Region::Ld)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Hd,
    Ld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingOp {
    None,
    Random,
    Des,
    Gas,
}

impl SamplingOp {
    pub const ALL: [SamplingOp; 4] = [SamplingOp::None, SamplingOp::Random, SamplingOp::Des, SamplingOp::Gas];

    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            SamplingOp::None => "none",
            SamplingOp::Random => "random",
            SamplingOp::Des => "des",
            SamplingOp::Gas => "gas",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub region: Region,
    pub op: SamplingOp,
    /// Mean over frames.
    pub n_all: f64,
    pub n_fg: f64,
    /// `None` for the unsampled row or when the unsampled count is zero.
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatioReport {
    pub frames: usize,
    pub rows: Vec<RatioRow>,
}

impl RatioReport {
    pub fn row(&self, region: Region, op: SamplingOp) -> Option<&RatioRow> {
        self.rows.iter().find(|r| r.region == region && r.op == op)
    }

    /// Checks the ratio invariants; returns the problems found.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for r in &self.rows {
            let tag = format!("{:?}/{}", r.region, r.op.name());
            if !(r.n_all >= 0.0 && r.n_fg >= 0.0 && r.n_fg <= r.n_all) {
                v.push(format!("{tag}: counts must satisfy 0 <= n_fg <= n_all"));
            }
            if let Some(r2) = r.r2 {
                if !(0.0..=1.0).contains(&r2) {
                    v.push(format!("{tag}: r2 out of [0, 1]"));
                }
            }
            if let Some(r1) = r.r1 {
                if r1 < 0.0 || r.op == SamplingOp::None {
                    v.push(format!("{tag}: invalid r1"));
                }
            }
        }
        v
    }
}

/// One analysis frame: raw cloud plus its ground truth, if any.
#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub cloud: PointCloud,
    pub gt: Option<Vec<Box7>>,
}

/// Per-region (all, foreground) counts of one cloud.
pub fn region_counts(
    cloud: &PointCloud,
    gt: &[Box7],
    des: &DesConfig,
    split: &RegionSplit,
) -> [(usize, usize); 2] {
    let mut out = [(0usize, 0usize); 2];
    for p in cloud.iter() {
        let Some(ring) = des.ring_of(p.planar_distance()) else { continue };
        let Some(region) = split.region_of(ring) else { continue };
        let slot = &mut out[region as usize];
        slot.0 += 1;
        if gt.iter().any(|b| point_in_box(p, b)) {
            slot.1 += 1;
        }
    }
    out
}

/// Per-frame `[region][op] -> (n_all, n_fg)` counts.
pub type FrameTally = [[(usize, usize); 4]; 2];

/// Counts one frame's sampled clouds. `set` must hold all three branches.
pub fn frame_tally(set: &MultiViewSet, gt: &[Box7], des: &DesConfig, split: &RegionSplit) -> FrameTally {
    let clouds = [
        Some(&set.cropped),
        set.pv1.as_ref(),
        set.pv2.as_ref(),
        set.pv3.as_ref(),
    ];
    let mut tally = [[(0, 0); 4]; 2];
    for op in SamplingOp::ALL {
        let cloud = clouds[op.index()].expect("all branches enabled");
        let counts = region_counts(cloud, gt, des, split);
        for region in [Region::Hd, Region::Ld] {
            tally[region as usize][op.index()] = counts[region as usize];
        }
    }
    tally
}

/// Averages tallies over frames (in the given order) and forms the ratios.
pub fn report_from_tallies(tallies: &[FrameTally]) -> RatioReport {
    if tallies.is_empty() {
        return RatioReport::default();
    }
    let mut sums = [[(0u64, 0u64); 4]; 2];
    for t in tallies {
        for (region, ops) in t.iter().enumerate() {
            for (op, &(all, fg)) in ops.iter().enumerate() {
                sums[region][op].0 += all as u64;
                sums[region][op].1 += fg as u64;
            }
        }
    }
    let n = tallies.len() as f64;
    let mut rows = Vec::with_capacity(8);
    for region in [Region::Hd, Region::Ld] {
        let base_fg = sums[region as usize][0].1 as f64 / n;
        for op in SamplingOp::ALL {
            let (all, fg) = sums[region as usize][op.index()];
            let n_all = all as f64 / n;
            let n_fg = fg as f64 / n;
            let r1 = (op != SamplingOp::None && base_fg > 0.0).then(|| n_fg / base_fg);
            let r2 = (n_all > 0.0).then(|| n_fg / n_all);
            rows.push(RatioRow {
                region,
                op,
                n_all,
                n_fg,
                r1,
                r2,
            });
        }
    }
    RatioReport {
        frames: tallies.len(),
        rows,
    }
}

/// Identifier used for seeding and error messages.
pub(crate) fn frame_label(cloud: &PointCloud, position: usize) -> String {
    if cloud.frame_id.is_empty() {
        format!("#{position}")
    } else {
        cloud.frame_id.clone()
    }
}

/// Runs all four sampling ops over every frame and aggregates mean counts
/// and ratios per region. Each frame uses the seed derived from its frame id
/// (or its position when the id is empty), exactly as the pipeline does.
pub fn ratio_report(
    frames: &[LabeledFrame],
    cfg: &PipelineConfig,
    seed: SampleSeed,
) -> Result<RatioReport, AnalysisError> {
    if frames.is_empty() {
        return Err(AnalysisError::NoFrames);
    }
    let split = RegionSplit::for_rings(cfg.des.ring_count());
    split.check(cfg.des.ring_count())?;
    let mut cfg = cfg.clone();
    cfg.stages = vec![Stage::Pv1, Stage::Pv2, Stage::Pv3];

    let mut tallies = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let id = frame_label(&frame.cloud, k);
        let gt = frame
            .gt
            .as_deref()
            .ok_or_else(|| AnalysisError::NoGroundTruth(id.clone()))?;
        let set = sample_branches(&frame.cloud, &cfg, frame_seed(seed, &id))?;
        tallies.push(frame_tally(&set, gt, &cfg.des, &split));
    }
    Ok(report_from_tallies(&tallies))
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn fmt_percent(v: Option<f64>, dash: bool) -> String {
    if dash {
        return "-".into();
    }
    v.map(|x| format!("{:.1}%", x * 100.0)).unwrap_or_default()
}

/// Serializes a report. `Csv` is long form (`region,op,n_all,n_fg,r1,r2`,
/// counts rounded, unsampled `r1` shown as `-`); `Table` is the wide layout
/// with one column per region/op pair; `Json` keeps full precision.
pub fn emit_report(report: &RatioReport, format: EmitFormat) -> Vec<u8> {
    match format {
        EmitFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
            v.push(b'\n');
            v
        }
        EmitFormat::Csv => {
            let mut s = String::from("region,op,n_all,n_fg,r1,r2\n");
            for r in &report.rows {
                let region = match r.region {
                    Region::Hd => "hd",
                    Region::Ld => "ld",
                };
                let r1 = if r.op == SamplingOp::None {
                    "-".to_string()
                } else {
                    fmt_ratio(r.r1)
                };
                let _ = writeln!(
                    s,
                    "{region},{},{},{},{r1},{}",
                    r.op.name(),
                    r.n_all.round() as u64,
                    r.n_fg.round() as u64,
                    fmt_ratio(r.r2)
                );
            }
            s.into_bytes()
        }
        EmitFormat::Table => {
            let mut cols: Vec<&RatioRow> = Vec::new();
            let mut s = String::from("metric");
            for region in [Region::Hd, Region::Ld] {
                for op in SamplingOp::ALL {
                    if let Some(r) = report.row(region, op) {
                        let prefix = if region == Region::Hd { "HD" } else { "LD" };
                        let _ = write!(s, ",{prefix}S{}", op.index());
                        cols.push(r);
                    }
                }
            }
            s.push('\n');
            if cols.is_empty() {
                return s.into_bytes();
            }
            let line = |name: &str, f: &dyn Fn(&RatioRow) -> String| {
                let cells: Vec<String> = cols.iter().map(|r| f(r)).collect();
                format!("{name},{}\n", cells.join(","))
            };
            s += &line("N_all", &|r| format!("{}", r.n_all.round() as u64));
            s += &line("N_fg", &|r| format!("{}", r.n_fg.round() as u64));
            s += &line("R1", &|r| fmt_percent(r.r1, r.op == SamplingOp::None));
            s += &line("R2", &|r| fmt_percent(r.r2, false));
            s.into_bytes()
        }
    }
}

pub fn parse_report_json(bytes: &[u8]) -> Result<RatioReport, serde_json::Error> {
    serde_json::from_slice(bytes)
}
