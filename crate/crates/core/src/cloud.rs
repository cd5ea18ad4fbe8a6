// SPDX-License-Identifier: Apache-2.0

//! Point-cloud data model, `.bin` frame I/O, range cropping and the
//! fixed-count random branch.
//!
//! Frames use the KITTI velodyne layout: a flat run of little-endian `f32`
//! quadruples `(x, y, z, reflectivity)`, 16 bytes per point, no header.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::SampleSeed;

/// Bytes per encoded point.
pub const POINT_STRIDE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame length {len} is not a multiple of {POINT_STRIDE} bytes")]
    TruncatedFrame { len: usize },
    #[error("non-finite value in point {index}")]
    NonFiniteValue { index: usize },
    #[error("cannot sample {requested} points from an empty cloud")]
    EmptyInput { requested: usize },
    #[error("fixed point count must be positive")]
    ZeroCount,
}

/// One LiDAR return in the sensor frame: x forward, y left, z up (meters),
/// `r` reflectivity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub r: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, r: f32) -> Self {
        Self { x, y, z, r }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.r.is_finite()
    }

    /// Distance from the sensor in the xy-plane.
    #[inline]
    pub fn planar_distance(&self) -> f64 {
        (self.x as f64).hypot(self.y as f64)
    }

    #[inline]
    pub fn as_array(&self) -> [f32; 4] {
        [self.x, self.y, self.z, self.r]
    }

    /// Bitwise identity, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Point) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: String,
    /// Whether a crop has been applied along x, y and z.
    pub crop_applied: [bool; 3],
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            frame_id: String::new(),
            crop_applied: [false; 3],
        }
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Same metadata, different points.
    pub(crate) fn derive(&self, points: Vec<Point>) -> PointCloud {
        PointCloud {
            points,
            frame_id: self.frame_id.clone(),
            crop_applied: self.crop_applied,
        }
    }

    /// Copies the points at `indices`, in the given order.
    pub fn gather(&self, indices: &[usize]) -> PointCloud {
        self.derive(indices.iter().map(|&i| self.points[i]).collect())
    }
}

/// Axis-aligned detection range, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRange {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl CropRange {
    pub fn contains(&self, p: &Point) -> bool {
        let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
        self.x_min <= x
            && x <= self.x_max
            && self.y_min <= y
            && y <= self.y_max
            && self.z_min <= z
            && z <= self.z_max
    }

    pub fn min_corner(&self) -> [f64; 3] {
        [self.x_min, self.y_min, self.z_min]
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (axis, lo, hi) in [
            ("x", self.x_min, self.x_max),
            ("y", self.y_min, self.y_max),
            ("z", self.z_min, self.z_max),
        ] {
            if !(lo.is_finite() && hi.is_finite()) {
                out.push(format!("crop.{axis}: bounds must be finite"));
            } else if lo >= hi {
                out.push(format!("crop.{axis}: min ({lo}) must be < max ({hi})"));
            }
        }
        out
    }
}

/// Decodes a `.bin` frame.
pub fn read_frame(bytes: &[u8]) -> Result<PointCloud, FrameError> {
    if !bytes.len().is_multiple_of(POINT_STRIDE) {
        return Err(FrameError::TruncatedFrame { len: bytes.len() });
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_STRIDE);
    for (index, rec) in bytes.chunks_exact(POINT_STRIDE).enumerate() {
        let f = |k: usize| f32::from_le_bytes([rec[k], rec[k + 1], rec[k + 2], rec[k + 3]]);
        let p = Point::new(f(0), f(4), f(8), f(12));
        if !p.is_finite() {
            return Err(FrameError::NonFiniteValue { index });
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn write_frame(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_STRIDE);
    for p in &cloud.points {
        for v in p.as_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Keeps the points inside `range`, preserving order.
pub fn crop(cloud: &PointCloud, range: &CropRange) -> PointCloud {
    let mut out = cloud.derive(cloud.iter().filter(|p| range.contains(p)).copied().collect());
    out.crop_applied = [true; 3];
    out
}

/// Indices of a uniform fixed-count sample of `0..len`.
///
/// With `len >= n` the indices are distinct and returned ascending. Otherwise
/// every index appears once (ascending) followed by `n - len` uniformly drawn
/// duplicates.
pub fn fixed_count_indices(len: usize, n: usize, seed: SampleSeed, label: &str) -> Vec<usize> {
    let mut rng = seed.rng(label);
    if len >= n {
        // Partial Fisher-Yates over an index table.
        let mut table: Vec<usize> = (0..len).collect();
        for i in 0..n {
            let j = rng.gen_range(i..len);
            table.swap(i, j);
        }
        table.truncate(n);
        table.sort_unstable();
        table
    } else {
        let mut out: Vec<usize> = (0..len).collect();
        out.extend((len..n).map(|_| rng.gen_range(0..len)));
        out
    }
}

/// Brings a cloud to exactly `n_p` points (branch Pv1 and branch finalization).
pub fn random_fixed_count(
    cloud: &PointCloud,
    n_p: usize,
    seed: SampleSeed,
) -> Result<PointCloud, FrameError> {
    if n_p == 0 {
        return Err(FrameError::ZeroCount);
    }
    if cloud.is_empty() {
        return Err(FrameError::EmptyInput { requested: n_p });
    }
    let idx = fixed_count_indices(cloud.len(), n_p, seed, "fixed-count");
    Ok(cloud.gather(&idx))
}
