// SPDX-License-Identifier: Apache-2.0

//! Batch runner: reads every `*.bin` frame of a directory, runs the enabled
//! branches on a bounded worker pool and writes per-frame outputs plus a
//! manifest.
//!
//! Output layout:
//!
//! ```text
//! <output>/<frame_id>/pv1.bin | pv2.bin | pv3.bin
//! <output>/<frame_id>/ckps.mask + ckps.json
//! <output>/manifest.json
//! <output>/stats.{json,csv} stats_table.csv rings.csv   (with emit_stats)
//! ```
//!
//! Labels for a frame are read from `<frame_id>.txt` next to the `.bin`.
//! Every file is written to a temporary name and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    emit_report, frame_tally, percentages, report_from_tallies, ring_counts, FrameTally, RatioReport,
    RegionSplit,
};
use crate::boxes::{parse_labels, Box7, LabelError};
use crate::branches::{frame_seed, sample_branches, BranchError, MultiViewSet};
use crate::ckps::{encode_mask, MaskSidecar};
use crate::cloud::{read_frame, write_frame, FrameError, PointCloud};
use crate::config::{ConfigError, EmitFormat, PipelineConfig, Stage};
use crate::seed::{SampleSeed, GENERATOR_ID};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FrameFailure {
    #[error(transparent)]
    Decode(#[from] FrameError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Sampling(#[from] BranchError),
    #[error("no ground-truth labels (needed for statistics)")]
    NoGroundTruth,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no frames found in {}", .0.display())]
    NoFrames(PathBuf),
    #[error("frame {frame_id}: {source}")]
    Frame {
        frame_id: String,
        source: FrameFailure,
    },
}

impl PipelineError {
    /// Process exit status: 1 config, 2 I/O, 3 frame.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Io { .. } | PipelineError::NoFrames(_) => 2,
            PipelineError::Frame { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            PipelineError::NoFrames(_) => "no_frames",
            PipelineError::Frame { .. } => "frame",
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let PipelineError::Frame { frame_id, .. } = self {
            v["frame_id"] = serde_json::Value::String(frame_id.clone());
        }
        v
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; results do not depend on this.
    pub workers: usize,
    /// Skip frames that fail instead of aborting.
    pub keep_going: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            keep_going: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub input_points: usize,
    pub cropped_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pv1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pv2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pv3: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFrame {
    pub frame_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub config_hash: String,
    pub preset: String,
    pub seed: u64,
    pub n_p: usize,
    pub stages: Vec<Stage>,
    pub frames: Vec<FrameRecord>,
    pub skipped: Vec<SkippedFrame>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub report: Option<RatioReport>,
}

/// Frame files of a directory, sorted by name.
pub fn list_frames(input: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut frames: Vec<PathBuf> = fs::read_dir(input)
        .map_err(io_err(input))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "bin"))
        .collect();
    frames.sort();
    Ok(frames)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn frame_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads the optional `<stem>.txt` label file beside a frame.
pub fn load_labels(frame: &Path) -> Result<Option<Vec<Box7>>, PipelineError> {
    let path = frame.with_extension("txt");
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let labels = parse_labels(&text).map_err(|e| PipelineError::Frame {
        frame_id: frame_id_of(frame),
        source: e.into(),
    })?;
    Ok(Some(labels.into_iter().map(|l| l.bbox).collect()))
}

struct FrameResult {
    record: FrameRecord,
    tally: Option<FrameTally>,
    rings: Option<(Vec<usize>, Vec<usize>)>,
}

fn frame_error(frame_id: &str, e: impl Into<FrameFailure>) -> PipelineError {
    PipelineError::Frame {
        frame_id: frame_id.to_string(),
        source: e.into(),
    }
}

fn process_frame(
    path: &Path,
    cfg: &PipelineConfig,
    seed: SampleSeed,
    output: &Path,
) -> Result<FrameResult, PipelineError> {
    let frame_id = frame_id_of(path);
    let bytes = fs::read(path).map_err(io_err(path))?;
    let raw = read_frame(&bytes)
        .map_err(|e| frame_error(&frame_id, e))?
        .with_frame_id(frame_id.clone());
    let gt = if cfg.emit_stats {
        Some(load_labels(path)?.ok_or_else(|| frame_error(&frame_id, FrameFailure::NoGroundTruth))?)
    } else {
        None
    };

    let set: MultiViewSet = sample_branches(&raw, cfg, frame_seed(seed, &frame_id))
        .map_err(|e| frame_error(&frame_id, e))?;

    let dir = output.join(&frame_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, cloud) in [("pv1.bin", &set.pv1), ("pv2.bin", &set.pv2), ("pv3.bin", &set.pv3)] {
        if let Some(c) = cloud {
            write_atomic(&dir.join(name), &write_frame(c))?;
        }
    }
    if let Some(mask) = &set.mask {
        write_atomic(&dir.join("ckps.mask"), &encode_mask(mask))?;
        let sidecar = MaskSidecar::new(&frame_id, &cfg.ckps, mask);
        let mut json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        json.push(b'\n');
        write_atomic(&dir.join("ckps.json"), &json)?;
    }

    let (tally, rings) = match &gt {
        Some(gt) => {
            let split = RegionSplit::for_rings(cfg.des.ring_count());
            let t = frame_tally(&set, gt, &cfg.des, &split);
            let before = ring_counts(&set.cropped, &cfg.des);
            let after = ring_counts(set.pv2.as_ref().unwrap_or(&PointCloud::default()), &cfg.des);
            (Some(t), Some((before, after)))
        }
        None => (None, None),
    };

    Ok(FrameResult {
        record: FrameRecord {
            frame_id,
            input_points: raw.len(),
            cropped_points: set.cropped.len(),
            pv1: set.pv1.as_ref().map(PointCloud::len),
            pv2: set.pv2.as_ref().map(PointCloud::len),
            pv3: set.pv3.as_ref().map(PointCloud::len),
            keypoints: set.mask.as_ref().map(|m| m.len()),
        },
        tally,
        rings,
    })
}

fn rings_csv(before: &[usize], after: &[usize]) -> String {
    let (pb, pa) = (percentages(before), percentages(after));
    let mut s = String::from("ring,before_count,after_count,before_pct,after_pct\n");
    for j in 0..before.len() {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.4}",
            j + 1,
            before[j],
            after[j],
            pb[j],
            pa[j]
        );
    }
    s
}

/// Runs the configured pipeline over `input`, writing into `output`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    input: &Path,
    output: &Path,
    opts: RunOptions,
) -> Result<RunSummary, PipelineError> {
    let cfg = cfg.clone().validate()?;
    let frames = list_frames(input)?;
    if frames.is_empty() {
        return Err(PipelineError::NoFrames(input.to_path_buf()));
    }
    fs::create_dir_all(output).map_err(io_err(output))?;
    let seed = SampleSeed::new(cfg.seed);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .expect("worker pool");
    let results: Vec<Result<FrameResult, PipelineError>> = pool.install(|| {
        frames
            .par_iter()
            .map(|p| process_frame(p, &cfg, seed, output))
            .collect()
    });

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut tallies = Vec::new();
    let mut ring_before = vec![0usize; cfg.des.ring_count()];
    let mut ring_after = vec![0usize; cfg.des.ring_count()];
    for (path, res) in frames.iter().zip(results) {
        match res {
            Ok(r) => {
                if let Some(t) = r.tally {
                    tallies.push(t);
                }
                if let Some((b, a)) = r.rings {
                    ring_before.iter_mut().zip(b).for_each(|(s, v)| *s += v);
                    ring_after.iter_mut().zip(a).for_each(|(s, v)| *s += v);
                }
                records.push(r.record);
            }
            Err(e @ PipelineError::Frame { .. }) if opts.keep_going => skipped.push(SkippedFrame {
                frame_id: frame_id_of(path),
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        generator: GENERATOR_ID.to_string(),
        config_hash: cfg.hash(),
        preset: cfg.preset.to_string(),
        seed: cfg.seed,
        n_p: cfg.n_p,
        stages: cfg.stages.clone(),
        frames: records,
        skipped,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_atomic(&output.join("manifest.json"), &json)?;

    let report = if cfg.emit_stats {
        let report = report_from_tallies(&tallies);
        for format in &cfg.emit {
            let name = match format {
                EmitFormat::Json => "stats.json",
                EmitFormat::Csv => "stats.csv",
                EmitFormat::Table => "stats_table.csv",
            };
            write_atomic(&output.join(name), &emit_report(&report, *format))?;
        }
        write_atomic(&output.join("rings.csv"), rings_csv(&ring_before, &ring_after).as_bytes())?;
        Some(report)
    } else {
        None
    };

    Ok(RunSummary { manifest, report })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}
