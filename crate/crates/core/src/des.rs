// SPDX-License-Identifier: Apache-2.0

//! Density equalization sampling (branch Pv2).
//!
//! The xy-plane within `tau_far` of the sensor is cut into concentric rings of
//! width `d_t`. Each ring's density (points per square meter, with the ring
//! area scaled by `mu`) selects one of four actions: upsample sparse rings
//! from their points inside the z-focus band, keep medium rings, and thin out
//! dense rings by `s2` or `s3` of their count.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{random_fixed_count, FrameError, Point, PointCloud};
use crate::seed::SampleSeed;

/// Tolerance when checking that a ratio of lengths is an integer.
pub(crate) const INTEGER_RATIO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesConfig {
    /// Outer radius of the ring partition (m).
    pub tau_far: f64,
    /// Ring width (m).
    pub d_t: f64,
    /// Area coefficient applied to every ring.
    pub mu: f64,
    pub rho_s: f64,
    pub rho_m: f64,
    pub rho_l: f64,
    /// Fraction of a sparse ring's count added by upsampling.
    pub s1: f64,
    /// Fraction removed from medium-high density rings.
    pub s2: f64,
    /// Fraction removed from high density rings.
    pub s3: f64,
    pub tau_z_min: f64,
    pub tau_z_max: f64,
    /// Half-width of uniform xyz noise added to upsampled copies. 0 = exact duplicates.
    #[serde(default)]
    pub jitter: f64,
}

impl DesConfig {
    pub fn kitti() -> Self {
        Self {
            tau_far: 40.0,
            d_t: 5.0,
            mu: 0.5,
            rho_s: 5.0,
            rho_m: 8.0,
            rho_l: 15.0,
            s1: 0.15,
            s2: 0.1,
            s3: 0.15,
            tau_z_min: -1.5,
            tau_z_max: 0.5,
            jitter: 0.0,
        }
    }

    /// WOD thresholds; ring width and proportions carried over from KITTI.
    pub fn wod() -> Self {
        Self {
            tau_far: 55.0,
            mu: 1.0,
            rho_s: 12.0,
            rho_m: 20.0,
            rho_l: 36.0,
            tau_z_min: -1.0,
            tau_z_max: 2.0,
            ..Self::kitti()
        }
    }

    /// Number of rings, `tau_far / d_t`.
    pub fn ring_count(&self) -> usize {
        (self.tau_far / self.d_t).round() as usize
    }

    /// Area of ring `j` (1-based): `mu * pi * (j^2 - (j-1)^2) * d_t^2`.
    pub fn ring_area(&self, j: usize) -> f64 {
        let j = j as f64;
        self.mu * PI * (j * j - (j - 1.0) * (j - 1.0)) * self.d_t * self.d_t
    }

    /// Ring (1-based) holding a planar distance, or `None` beyond `tau_far`.
    /// Rings are `((j-1) d_t, j d_t]`; `d = 0` goes to ring 1.
    pub fn ring_of(&self, d: f64) -> Option<usize> {
        if d > self.tau_far {
            return None;
        }
        let j = (d / self.d_t).ceil() as usize;
        Some(j.clamp(1, self.ring_count()))
    }

    pub fn action_for(&self, density: f64) -> RingAction {
        if density < self.rho_s {
            RingAction::Upsample
        } else if density < self.rho_m {
            RingAction::Keep
        } else if density < self.rho_l {
            RingAction::DownsampleMedium
        } else {
            RingAction::DownsampleHigh
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let all = [
            self.tau_far,
            self.d_t,
            self.mu,
            self.rho_s,
            self.rho_m,
            self.rho_l,
            self.s1,
            self.s2,
            self.s3,
            self.tau_z_min,
            self.tau_z_max,
            self.jitter,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            v.push("des: all parameters must be finite".to_string());
            return v;
        }
        if self.tau_far <= 0.0 {
            v.push(format!("des.tau_far must be > 0 (got {})", self.tau_far));
        }
        if self.d_t <= 0.0 {
            v.push(format!("des.d_t must be > 0 (got {})", self.d_t));
        }
        if self.tau_far > 0.0 && self.d_t > 0.0 {
            let ratio = self.tau_far / self.d_t;
            if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > INTEGER_RATIO_TOL {
                v.push(format!(
                    "des: ring count n_r = tau_far / d_t must be a positive integer (got {ratio})"
                ));
            }
        }
        if self.mu <= 0.0 {
            v.push(format!("des.mu must be > 0 (got {})", self.mu));
        }
        if !(0.0 < self.rho_s && self.rho_s <= self.rho_m && self.rho_m <= self.rho_l) {
            v.push(format!(
                "des: 0 < rho_s <= rho_m <= rho_l required (got {}, {}, {})",
                self.rho_s, self.rho_m, self.rho_l
            ));
        }
        if !(self.s1 == self.s3 && self.s3 > self.s2 && self.s2 > 0.0) {
            v.push(format!(
                "des: s1 = s3 > s2 required (got s1={}, s2={}, s3={})",
                self.s1, self.s2, self.s3
            ));
        }
        if self.s3 >= 1.0 || self.s2 >= 1.0 {
            v.push("des: downsampling proportions s2, s3 must be < 1".to_string());
        }
        if self.tau_z_min >= self.tau_z_max {
            v.push(format!(
                "des: tau_z_min < tau_z_max required (got {}, {})",
                self.tau_z_min, self.tau_z_max
            ));
        }
        if self.jitter < 0.0 {
            v.push("des.jitter must be >= 0".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingAction {
    Upsample,
    Keep,
    DownsampleMedium,
    DownsampleHigh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingPartition {
    /// Ring (1-based) of each input point; `None` beyond `tau_far`.
    pub assignments: Vec<Option<usize>>,
    /// Indexed by `j - 1`.
    pub counts: Vec<usize>,
    pub areas: Vec<f64>,
    pub densities: Vec<f64>,
}

impl RingPartition {
    pub fn ring_count(&self) -> usize {
        self.counts.len()
    }

    pub fn outside(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }
}

pub fn partition_rings(cloud: &PointCloud, cfg: &DesConfig) -> RingPartition {
    let n_r = cfg.ring_count();
    let assignments: Vec<Option<usize>> = cloud
        .iter()
        .map(|p| cfg.ring_of(p.planar_distance()))
        .collect();
    let mut counts = vec![0usize; n_r];
    for j in assignments.iter().flatten() {
        counts[j - 1] += 1;
    }
    let areas: Vec<f64> = (1..=n_r).map(|j| cfg.ring_area(j)).collect();
    let densities = counts
        .iter()
        .zip(&areas)
        .map(|(&n, &s)| n as f64 / s)
        .collect();
    RingPartition {
        assignments,
        counts,
        areas,
        densities,
    }
}

/// `floor(s * n)`, robust to representation error in `s`.
pub fn proportion_count(s: f64, n: usize) -> usize {
    (s * n as f64 + 1e-9).floor() as usize
}

/// What DES did to one ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingChange {
    pub ring: usize,
    pub density: f64,
    pub action: RingAction,
    pub input: usize,
    pub added: usize,
    pub removed: usize,
}

#[derive(Debug, Clone)]
pub struct DesOutcome {
    pub cloud: PointCloud,
    pub rings: Vec<RingChange>,
}

/// Runs DES, keeping the per-ring bookkeeping.
///
/// Output order: surviving input points in input order, then the upsampled
/// copies ring by ring.
pub fn des_sample_detailed(cloud: &PointCloud, cfg: &DesConfig, seed: SampleSeed) -> DesOutcome {
    let part = partition_rings(cloud, cfg);
    let n_r = part.ring_count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_r];
    for (i, a) in part.assignments.iter().enumerate() {
        if let Some(j) = a {
            members[j - 1].push(i);
        }
    }

    let mut rng = seed.rng("des");
    let mut keep = vec![true; cloud.len()];
    let mut extra: Vec<Point> = Vec::new();
    let mut rings = Vec::with_capacity(n_r);

    for (k, idx) in members.iter_mut().enumerate() {
        let n = idx.len();
        let density = part.densities[k];
        let action = cfg.action_for(density);
        let mut change = RingChange {
            ring: k + 1,
            density,
            action,
            input: n,
            added: 0,
            removed: 0,
        };
        match action {
            RingAction::Keep => {}
            RingAction::Upsample => {
                let pool: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let z = cloud.points[i].z as f64;
                        cfg.tau_z_min <= z && z <= cfg.tau_z_max
                    })
                    .collect();
                if !pool.is_empty() {
                    let add = proportion_count(cfg.s1, n);
                    for _ in 0..add {
                        let mut p = cloud.points[pool[rng.gen_range(0..pool.len())]];
                        if cfg.jitter > 0.0 {
                            let j = cfg.jitter;
                            p.x += rng.gen_range(-j..=j) as f32;
                            p.y += rng.gen_range(-j..=j) as f32;
                            p.z += rng.gen_range(-j..=j) as f32;
                        }
                        extra.push(p);
                    }
                    change.added = add;
                }
            }
            RingAction::DownsampleMedium | RingAction::DownsampleHigh => {
                let s = if action == RingAction::DownsampleMedium {
                    cfg.s2
                } else {
                    cfg.s3
                };
                let remove = proportion_count(s, n);
                let (chosen, _) = idx.partial_shuffle(&mut rng, remove);
                for &i in chosen.iter() {
                    keep[i] = false;
                }
                change.removed = remove;
            }
        }
        rings.push(change);
    }

    let mut points: Vec<Point> = cloud
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| *p)
        .collect();
    points.extend(extra);
    DesOutcome {
        cloud: cloud.derive(points),
        rings,
    }
}

pub fn des_sample(cloud: &PointCloud, cfg: &DesConfig, seed: SampleSeed) -> PointCloud {
    des_sample_detailed(cloud, cfg, seed).cloud
}

/// Brings a DES or GAS output to the fixed budget `n_p`.
pub fn finalize_branch(
    cloud: &PointCloud,
    n_p: usize,
    seed: SampleSeed,
) -> Result<PointCloud, FrameError> {
    random_fixed_count(cloud, n_p, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitti_ring_geometry() {
        let cfg = DesConfig::kitti();
        assert_eq!(cfg.ring_count(), 8);
        assert_eq!(cfg.ring_of(12.0), Some(3));
        assert_eq!(cfg.ring_of(0.0), Some(1));
        assert_eq!(cfg.ring_of(5.0), Some(1));
        assert_eq!(cfg.ring_of(5.0001), Some(2));
        assert_eq!(cfg.ring_of(40.0), Some(8));
        assert_eq!(cfg.ring_of(40.0001), None);
        // 0.5 * pi * (4 - 1) * 25
        assert!((cfg.ring_area(2) - 37.5 * PI).abs() < 1e-12);
        assert!((cfg.ring_area(2) - 117.81).abs() < 5e-3);
    }

    #[test]
    fn threshold_boundaries() {
        let cfg = DesConfig::kitti();
        assert_eq!(cfg.action_for(400.0 / cfg.ring_area(2)), RingAction::Upsample);
        assert_eq!(cfg.action_for(5.0), RingAction::Keep);
        assert_eq!(cfg.action_for(8.0), RingAction::DownsampleMedium);
        assert_eq!(cfg.action_for(15.0), RingAction::DownsampleHigh);
    }

    #[test]
    fn presets_are_valid() {
        assert!(DesConfig::kitti().violations().is_empty());
        assert!(DesConfig::wod().violations().is_empty());
        assert_eq!(DesConfig::wod().ring_count(), 11);
    }

    #[test]
    fn rejects_bad_proportions_and_ring_count() {
        let cfg = DesConfig {
            s2: 0.2,
            ..DesConfig::kitti()
        };
        assert!(cfg.violations().iter().any(|v| v.contains("s1 = s3 > s2")));
        let cfg = DesConfig {
            d_t: 3.0,
            ..DesConfig::kitti()
        };
        assert!(cfg.violations().iter().any(|v| v.contains("n_r")));
    }

    #[test]
    fn empty_upsampling_pool_adds_nothing() {
        let cfg = DesConfig::kitti();
        // 10 points in ring 4, all on the ground below tau_z_min.
        let pts = (0..10)
            .map(|i| Point::new(16.0 + i as f32 * 0.1, 0.0, -1.7, 0.1))
            .collect();
        let out = des_sample_detailed(&PointCloud::new(pts), &cfg, SampleSeed(1));
        let ring4 = out.rings[3];
        assert_eq!(ring4.action, RingAction::Upsample);
        assert_eq!(ring4.input, 10);
        assert_eq!(ring4.added, 0);
        assert_eq!(out.cloud.len(), 10);
    }

    #[test]
    fn outside_points_pass_through() {
        let cfg = DesConfig::kitti();
        let pts = vec![Point::new(60.0, 0.0, 0.0, 0.0), Point::new(0.0, 45.0, 0.0, 0.0)];
        let c = PointCloud::new(pts.clone());
        let part = partition_rings(&c, &cfg);
        assert_eq!(part.outside(), 2);
        assert_eq!(des_sample(&c, &cfg, SampleSeed(0)).points, pts);
    }
}
