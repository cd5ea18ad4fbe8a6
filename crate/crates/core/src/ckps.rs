// SPDX-License-Identifier: Apache-2.0

//! Consistent keypoint selection across the three branch clouds.
//!
//! Each view is voxelized on one shared grid. Voxels occupied in all three
//! views are scanned in key order; inside a voxel the first view-1 point
//! (by index) that has a partner within `tau_v` (infinity norm over x, y, z
//! and reflectivity) in both other views becomes that voxel's keypoint.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Point, PointCloud};

pub type VoxelKey = [i64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkpsError {
    #[error("voxel tables were built with different grids")]
    MismatchedConfig,
    #[error("mask file is malformed: {0}")]
    MalformedMask(String),
}

fn default_voxel_size() -> f64 {
    0.4
}

fn default_tau_v() -> f64 {
    0.001
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkpsConfig {
    #[serde(default = "default_voxel_size")]
    pub voxel_size: f64,
    #[serde(default = "default_tau_v")]
    pub tau_v: f64,
    /// Grid anchor; defaults to the crop range minimum corner when resolved
    /// through a pipeline config.
    #[serde(default)]
    pub origin: Option<[f64; 3]>,
}

impl Default for CkpsConfig {
    fn default() -> Self {
        Self {
            voxel_size: default_voxel_size(),
            tau_v: default_tau_v(),
            origin: None,
        }
    }
}

impl CkpsConfig {
    pub fn origin(&self) -> [f64; 3] {
        self.origin.unwrap_or([0.0; 3])
    }

    pub fn voxel_key(&self, p: &Point) -> VoxelKey {
        let o = self.origin();
        let s = self.voxel_size;
        [
            ((p.x as f64 - o[0]) / s).floor() as i64,
            ((p.y as f64 - o[1]) / s).floor() as i64,
            ((p.z as f64 - o[2]) / s).floor() as i64,
        ]
    }

    /// Half-open bounds `[lo, hi)` of a voxel per axis.
    pub fn voxel_bounds(&self, key: VoxelKey) -> [(f64, f64); 3] {
        let o = self.origin();
        let s = self.voxel_size;
        std::array::from_fn(|a| {
            let lo = o[a] + key[a] as f64 * s;
            (lo, lo + s)
        })
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            v.push(format!("ckps.voxel_size must be > 0 (got {})", self.voxel_size));
        }
        if !(self.tau_v.is_finite() && self.tau_v > 0.0) {
            v.push(format!("ckps.tau_v must be > 0 (got {})", self.tau_v));
        }
        if let Some(o) = self.origin {
            if o.iter().any(|c| !c.is_finite()) {
                v.push("ckps.origin must be finite".to_string());
            }
        }
        v
    }
}

/// Occupied voxels of one view with their inner point indices (ascending).
#[derive(Debug, Clone)]
pub struct VoxelHashTable {
    voxel_size: f64,
    origin: [f64; 3],
    voxels: HashMap<VoxelKey, Vec<u32>>,
}

impl VoxelHashTable {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.voxels.contains_key(key)
    }

    pub fn inner(&self, key: &VoxelKey) -> &[u32] {
        self.voxels.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn keys(&self) -> impl Iterator<Item = &VoxelKey> {
        self.voxels.keys()
    }

    fn same_grid(&self, other: &VoxelHashTable) -> bool {
        self.voxel_size == other.voxel_size && self.origin == other.origin
    }
}

pub fn voxelize(cloud: &PointCloud, cfg: &CkpsConfig) -> VoxelHashTable {
    let mut voxels: HashMap<VoxelKey, Vec<u32>> = HashMap::with_capacity(cloud.len() / 2);
    for (i, p) in cloud.iter().enumerate() {
        voxels.entry(cfg.voxel_key(p)).or_default().push(i as u32);
    }
    VoxelHashTable {
        voxel_size: cfg.voxel_size,
        origin: cfg.origin(),
        voxels,
    }
}

/// Keys occupied in all three views, ascending.
pub fn shared_voxels(tables: [&VoxelHashTable; 3]) -> Result<Vec<VoxelKey>, CkpsError> {
    let [a, b, c] = tables;
    if !(a.same_grid(b) && a.same_grid(c)) {
        return Err(CkpsError::MismatchedConfig);
    }
    // Probe from the smallest table.
    let mut order = [a, b, c];
    order.sort_by_key(|t| t.len());
    let mut keys: Vec<VoxelKey> = order[0]
        .keys()
        .filter(|k| order[1].contains(k) && order[2].contains(k))
        .copied()
        .collect();
    keys.sort_unstable();
    Ok(keys)
}

/// Per-view point indices of the consistent keypoints, one triple per voxel.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeypointMask {
    pub triples: Vec<[u32; 3]>,
    /// Voxel that produced each triple.
    pub voxels: Vec<VoxelKey>,
}

impl KeypointMask {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Index list for view `v` (0, 1 or 2).
    pub fn view(&self, v: usize) -> Vec<usize> {
        self.triples.iter().map(|t| t[v] as usize).collect()
    }
}

#[inline]
fn within(a: &Point, b: &Point, tau: f64) -> bool {
    let d = |u: f32, w: f32| (u as f64 - w as f64).abs();
    d(a.x, b.x) < tau && d(a.y, b.y) < tau && d(a.z, b.z) < tau && d(a.r, b.r) < tau
}

/// Keypoint selection over prebuilt tables.
pub fn select_keypoints_in(
    clouds: [&PointCloud; 3],
    tables: [&VoxelHashTable; 3],
    tau_v: f64,
) -> Result<KeypointMask, CkpsError> {
    let shared = shared_voxels(tables)?;
    let mut mask = KeypointMask::default();
    for key in shared {
        let first_match = |view: usize, anchor: &Point| {
            tables[view]
                .inner(&key)
                .iter()
                .copied()
                .find(|&m| within(&clouds[view].points[m as usize], anchor, tau_v))
        };
        for &j in tables[0].inner(&key) {
            let anchor = &clouds[0].points[j as usize];
            let Some(m2) = first_match(1, anchor) else { continue };
            let Some(m3) = first_match(2, anchor) else { continue };
            mask.triples.push([j, m2, m3]);
            mask.voxels.push(key);
            break;
        }
    }
    Ok(mask)
}

pub fn select_keypoints(clouds: [&PointCloud; 3], cfg: &CkpsConfig) -> Result<KeypointMask, CkpsError> {
    let tables = clouds.map(|c| voxelize(c, cfg));
    select_keypoints_in(clouds, [&tables[0], &tables[1], &tables[2]], cfg.tau_v)
}

/// `u32` count followed by `count` index triples, all little-endian.
pub fn encode_mask(mask: &KeypointMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 12 * mask.len());
    out.extend_from_slice(&(mask.len() as u32).to_le_bytes());
    for t in &mask.triples {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<Vec<[u32; 3]>, CkpsError> {
    let word = |k: usize| u32::from_le_bytes([bytes[k], bytes[k + 1], bytes[k + 2], bytes[k + 3]]);
    if bytes.len() < 4 {
        return Err(CkpsError::MalformedMask("missing count".into()));
    }
    let count = word(0) as usize;
    if bytes.len() != 4 + 12 * count {
        return Err(CkpsError::MalformedMask(format!(
            "count {count} needs {} bytes, got {}",
            4 + 12 * count,
            bytes.len()
        )));
    }
    Ok((0..count)
        .map(|i| {
            let base = 4 + 12 * i;
            [word(base), word(base + 4), word(base + 8)]
        })
        .collect())
}

/// JSON sidecar written next to a mask file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub frame_id: String,
    pub voxel_size: f64,
    pub tau_v: f64,
    pub origin: [f64; 3],
    pub count: usize,
}

impl MaskSidecar {
    pub fn new(frame_id: &str, cfg: &CkpsConfig, mask: &KeypointMask) -> Self {
        Self {
            frame_id: frame_id.to_string(),
            voxel_size: cfg.voxel_size,
            tau_v: cfg.tau_v,
            origin: cfg.origin(),
            count: mask.len(),
        }
    }
}
